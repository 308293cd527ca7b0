//! Event logs: the line-oriented record of a (real or simulated) order-flow
//! path, replayable through [`LobState`].
//!
//! Two text formats share one reader:
//!
//! * the order-flow file, one event per line,
//!   `ts_ns,eta,side,level,size,dt_ns,q_before`;
//! * the event-log file, the same columns plus `ref_price,mid_price`, preceded
//!   by `#`-prefixed header lines carrying the tick size and the initial book.
//!
//! Reference-price moves are rows with `eta = MOVE`: `side` is the side the
//! reference moved toward, `level` the refilled level and `size` the refill.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lob::{LobError, LobState, OrderEvent, RefMove};
use crate::types::{EventType, Side};

pub const LOG_MAGIC: &str = "# qrlob-eventlog v1";
const FLOW_COLUMNS: &str = "ts_ns,eta,side,level,size,dt_ns,q_before";
const LOG_COLUMNS: &str = "ts_ns,eta,side,level,size,dt_ns,q_before,ref_price,mid_price";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing header field '{0}'")]
    MissingHeader(&'static str),
    #[error("replay diverged at record {index}: {msg}")]
    Replay { index: usize, msg: String },
    #[error(transparent)]
    Lob(#[from] LobError),
}

/// One row of a flow: an order event or a reference-price move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowItem {
    Order(OrderEvent),
    Move { ts_ns: i64, mv: RefMove },
}

impl FlowItem {
    pub fn ts_ns(&self) -> i64 {
        match self {
            FlowItem::Order(ev) => ev.ts_ns,
            FlowItem::Move { ts_ns, .. } => *ts_ns,
        }
    }

    pub fn as_order(&self) -> Option<&OrderEvent> {
        match self {
            FlowItem::Order(ev) => Some(ev),
            FlowItem::Move { .. } => None,
        }
    }
}

/// A flow row plus the reference and mid prices (half ticks) after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub item: FlowItem,
    pub ref_half_ticks: i64,
    pub mid_half_ticks: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogSummary {
    pub events: u64,
    /// Indexed like [`EventType::ALL`].
    pub by_type: [u64; 5],
    pub ref_moves: u64,
    pub depletions: u64,
    /// Consuming events reduced to the available queue.
    pub clipped: u64,
    /// Consuming events dropped because the target queue was empty.
    pub dropped: u64,
}

impl LogSummary {
    pub fn count(&mut self, eta: EventType) {
        self.events += 1;
        let idx = EventType::ALL.iter().position(|&e| e == eta).unwrap_or(0);
        self.by_type[idx] += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    /// Book before the first record.
    pub initial: LobState,
    /// Session span covered by the log.
    pub start_ns: i64,
    pub end_ns: i64,
    pub records: Vec<LogRecord>,
    pub summary: LogSummary,
}

impl EventLog {
    pub fn new(initial: LobState, start_ns: i64, end_ns: i64) -> Self {
        EventLog {
            initial,
            start_ns,
            end_ns,
            records: Vec::new(),
            summary: LogSummary::default(),
        }
    }

    pub fn tick_size(&self) -> f64 {
        self.initial.tick_size
    }

    pub fn depth(&self) -> usize {
        self.initial.depth()
    }

    pub fn orders(&self) -> impl Iterator<Item = &OrderEvent> + '_ {
        self.records.iter().filter_map(|r| r.item.as_order())
    }

    /// Appends an item, stamping the prices of `state` (the book after it).
    pub fn push(&mut self, item: FlowItem, state: &LobState) {
        match item {
            FlowItem::Order(ev) => self.summary.count(ev.eta),
            FlowItem::Move { .. } => self.summary.ref_moves += 1,
        }
        self.records.push(LogRecord {
            item,
            ref_half_ticks: state.ref_half_ticks,
            mid_half_ticks: state.mid_half_ticks(),
        });
    }

    /// Replays every record from the initial book, calling `visit` with the
    /// book after each record. Fails on the first record whose `q_before`,
    /// reference or mid price disagrees with the replayed book.
    pub fn replay<F>(&self, mut visit: F) -> Result<LobState, LogError>
    where
        F: FnMut(usize, &LogRecord, &LobState),
    {
        let mut state = self.initial.clone();
        for (index, rec) in self.records.iter().enumerate() {
            match rec.item {
                FlowItem::Order(ev) => {
                    let q = state.queue(ev.side, ev.level)?;
                    if q != ev.q_before {
                        return Err(LogError::Replay {
                            index,
                            msg: format!("q_before {} but book holds {}", ev.q_before, q),
                        });
                    }
                    state.apply(&ev).map_err(|e| LogError::Replay {
                        index,
                        msg: e.to_string(),
                    })?;
                }
                FlowItem::Move { mv, .. } => state.shift_reference(mv.toward, mv.refill),
            }
            if state.ref_half_ticks != rec.ref_half_ticks || state.mid_half_ticks() != rec.mid_half_ticks {
                return Err(LogError::Replay {
                    index,
                    msg: format!(
                        "prices ({}, {}) but replay gives ({}, {})",
                        rec.ref_half_ticks,
                        rec.mid_half_ticks,
                        state.ref_half_ticks,
                        state.mid_half_ticks()
                    ),
                });
            }
            visit(index, rec, &state);
        }
        Ok(state)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), LogError> {
        let join = |v: &[u64]| v.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(out, "{LOG_MAGIC}")?;
        writeln!(out, "# tick_size={}", self.initial.tick_size)?;
        writeln!(out, "# depth={}", self.depth())?;
        writeln!(out, "# start_ns={}", self.start_ns)?;
        writeln!(out, "# end_ns={}", self.end_ns)?;
        writeln!(out, "# init_ref_half_ticks={}", self.initial.ref_half_ticks)?;
        writeln!(out, "# init_bids={}", join(&self.initial.bids))?;
        writeln!(out, "# init_asks={}", join(&self.initial.asks))?;
        writeln!(out, "{LOG_COLUMNS}")?;
        let half = self.tick_size() * 0.5;
        for rec in &self.records {
            write_item(&mut out, &rec.item)?;
            writeln!(
                out,
                ",{},{}",
                rec.ref_half_ticks as f64 * half,
                rec.mid_half_ticks as f64 * half
            )?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<EventLog, LogError> {
        let mut tick = None;
        let mut start = None;
        let mut end = None;
        let mut init_ref = None;
        let mut bids = None;
        let mut asks = None;
        let mut records = Vec::new();
        let mut saw_columns = false;
        for (i, line) in input.lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    let perr = |msg: String| LogError::Parse { line: lineno, msg };
                    match k.trim() {
                        "tick_size" => tick = Some(v.trim().parse::<f64>().map_err(|e| perr(e.to_string()))?),
                        "start_ns" => start = Some(v.trim().parse::<i64>().map_err(|e| perr(e.to_string()))?),
                        "end_ns" => end = Some(v.trim().parse::<i64>().map_err(|e| perr(e.to_string()))?),
                        "init_ref_half_ticks" => {
                            init_ref = Some(v.trim().parse::<i64>().map_err(|e| perr(e.to_string()))?)
                        }
                        "init_bids" => bids = Some(parse_queues(v).map_err(perr)?),
                        "init_asks" => asks = Some(parse_queues(v).map_err(perr)?),
                        _ => {}
                    }
                }
                continue;
            }
            if !saw_columns {
                if line.replace(' ', "") != LOG_COLUMNS {
                    return Err(LogError::Parse {
                        line: lineno,
                        msg: format!("expected column header '{LOG_COLUMNS}'"),
                    });
                }
                saw_columns = true;
                continue;
            }
            let tick = tick.ok_or(LogError::MissingHeader("tick_size"))?;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 9 {
                return Err(LogError::Parse {
                    line: lineno,
                    msg: format!("expected 9 fields, found {}", fields.len()),
                });
            }
            let item = parse_item(&fields[..7]).map_err(|msg| LogError::Parse { line: lineno, msg })?;
            let half = tick * 0.5;
            let to_half = |s: &str| -> Result<i64, LogError> {
                let p: f64 = s.parse().map_err(|e: std::num::ParseFloatError| LogError::Parse {
                    line: lineno,
                    msg: e.to_string(),
                })?;
                Ok((p / half).round() as i64)
            };
            records.push(LogRecord {
                item,
                ref_half_ticks: to_half(fields[7])?,
                mid_half_ticks: to_half(fields[8])?,
            });
        }
        let tick = tick.ok_or(LogError::MissingHeader("tick_size"))?;
        let initial = LobState::new(
            tick,
            init_ref.ok_or(LogError::MissingHeader("init_ref_half_ticks"))?,
            bids.ok_or(LogError::MissingHeader("init_bids"))?,
            asks.ok_or(LogError::MissingHeader("init_asks"))?,
        )?;
        let start_ns = start.ok_or(LogError::MissingHeader("start_ns"))?;
        let end_ns = end.ok_or(LogError::MissingHeader("end_ns"))?;
        let mut log = EventLog::new(initial, start_ns, end_ns);
        // depletions need the book; clipped and dropped are simulation
        // diagnostics the file does not carry
        let mut book = log.initial.clone();
        for (index, rec) in records.iter().enumerate() {
            match rec.item {
                FlowItem::Order(ev) => {
                    log.summary.count(ev.eta);
                    let depleted = book.apply(&ev).map_err(|e| LogError::Replay {
                        index,
                        msg: e.to_string(),
                    })?;
                    if depleted {
                        log.summary.depletions += 1;
                    }
                }
                FlowItem::Move { mv, .. } => {
                    log.summary.ref_moves += 1;
                    book.shift_reference(mv.toward, mv.refill);
                }
            }
        }
        log.records = records;
        Ok(log)
    }
}

fn parse_queues(v: &str) -> Result<Vec<u64>, String> {
    v.split_whitespace()
        .map(|q| q.parse::<u64>().map_err(|e| format!("bad queue size '{q}': {e}")))
        .collect()
}

fn write_item<W: Write>(out: &mut W, item: &FlowItem) -> std::io::Result<()> {
    match item {
        FlowItem::Order(ev) => write!(
            out,
            "{},{},{},{},{},{},{}",
            ev.ts_ns, ev.eta, ev.side, ev.level, ev.size, ev.dt_ns, ev.q_before
        ),
        FlowItem::Move { ts_ns, mv } => write!(out, "{},MOVE,{},0,{},0,0", ts_ns, mv.toward, mv.refill),
    }
}

fn parse_item(f: &[&str]) -> Result<FlowItem, String> {
    let ts_ns: i64 = f[0].parse().map_err(|e| format!("bad ts_ns '{}': {e}", f[0]))?;
    let side: Side = f[2].parse()?;
    let size: u64 = f[4].parse().map_err(|e| format!("bad size '{}': {e}", f[4]))?;
    if f[1].eq_ignore_ascii_case("MOVE") {
        return Ok(FlowItem::Move {
            ts_ns,
            mv: RefMove { toward: side, refill: size },
        });
    }
    let eta: EventType = f[1].parse()?;
    let level: usize = f[3].parse().map_err(|e| format!("bad level '{}': {e}", f[3]))?;
    let dt_ns: u64 = f[5].parse().map_err(|e| format!("bad dt_ns '{}': {e}", f[5]))?;
    let q_before: u64 = f[6].parse().map_err(|e| format!("bad q_before '{}': {e}", f[6]))?;
    if level == 0 {
        return Err("level must be >= 1".into());
    }
    if size == 0 {
        return Err("size must be >= 1".into());
    }
    Ok(FlowItem::Order(OrderEvent {
        ts_ns,
        eta,
        side,
        level,
        size,
        dt_ns,
        q_before,
    }))
}

/// Writes the seven-column order-flow file.
pub fn write_flow<W: Write>(mut out: W, items: &[FlowItem]) -> Result<(), LogError> {
    writeln!(out, "{FLOW_COLUMNS}")?;
    for item in items {
        write_item(&mut out, item)?;
        writeln!(out)?;
    }
    Ok(())
}

/// Reads a seven-column order-flow file.
pub fn read_flow<R: BufRead>(input: R) -> Result<Vec<FlowItem>, LogError> {
    let mut items = Vec::new();
    let mut saw_columns = false;
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_columns {
            if line.replace(' ', "") != FLOW_COLUMNS {
                return Err(LogError::Parse {
                    line: lineno,
                    msg: format!("expected column header '{FLOW_COLUMNS}'"),
                });
            }
            saw_columns = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(LogError::Parse {
                line: lineno,
                msg: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        items.push(parse_item(&fields).map_err(|msg| LogError::Parse { line: lineno, msg })?);
    }
    Ok(items)
}

/// Attaches relative reference prices to a flow that carries none: the
/// reference starts at 1 half tick and follows the `MOVE` rows. Mid prices
/// are not recoverable and are set equal to the reference.
pub fn records_from_items(items: &[FlowItem]) -> Vec<LogRecord> {
    let mut reference = 1i64;
    items
        .iter()
        .map(|item| {
            if let FlowItem::Move { mv, .. } = item {
                reference += 2 * mv.toward.sign();
            }
            LogRecord {
                item: *item,
                ref_half_ticks: reference,
                mid_half_ticks: reference,
            }
        })
        .collect()
}
