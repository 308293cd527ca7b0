//! Order-flow ingestion: raw book snapshots and trades to L/C/M events,
//! trading sessions, constant-reference segments and per-level statistics.
//!
//! Raw input is CSV with a required header `ts_ns,kind,side,level,price,size`
//! and an optional seventh column `aggressor`:
//!
//! * `kind = book`: one row per (side, level) of a snapshot; consecutive book
//!   rows sharing a timestamp form one snapshot. `level` is the 1-based rank
//!   of the price on its side, `size` may be 0.
//! * `kind = trade`: `side` is the resting side that was hit (may be empty
//!   when `aggressor` is given: a `buy` aggressor hits the ask), `level` is
//!   ignored.
//!
//! Prices are in currency units and must sit on the tick grid.

use std::collections::HashMap;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::{EventLog, FlowItem, LogRecord};
use crate::lob::{LobError, LobState, OrderEvent, RefMove};
use crate::types::{EventType, Side};

pub const NS_PER_SEC: i64 = 1_000_000_000;
pub const NS_PER_DAY: i64 = 86_400 * NS_PER_SEC;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: timestamp {ts} regresses {by} ns (tolerance {tol} ns)")]
    Regression { line: usize, ts: i64, by: i64, tol: i64 },
    #[error("no snapshot with both sides populated")]
    NoSnapshot,
    #[error("bad session window: {0}")]
    BadSession(String),
    #[error(transparent)]
    Lob(#[from] LobError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub ts_ns: i64,
    /// `(price in ticks, size)`, best first.
    pub bids: Vec<(i64, u64)>,
    pub asks: Vec<(i64, u64)>,
}

impl Snapshot {
    fn side(&self, side: Side) -> &[(i64, u64)] {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trade {
    pub ts_ns: i64,
    pub price_ticks: i64,
    pub size: u64,
    /// Resting side that was hit, when known.
    pub side: Option<Side>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawUpdate {
    Snapshot(Snapshot),
    Trade(Trade),
}

impl RawUpdate {
    pub fn ts_ns(&self) -> i64 {
        match self {
            RawUpdate::Snapshot(s) => s.ts_ns,
            RawUpdate::Trade(t) => t.ts_ns,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParseOptions {
    pub tick_size: f64,
    /// Timestamp regressions up to this many nanoseconds are clamped to the
    /// previous timestamp; larger ones are errors.
    pub regression_tolerance_ns: i64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            tick_size: 1.0,
            regression_tolerance_ns: 0,
        }
    }
}

/// Parses the raw CSV stream.
pub fn parse_stream<R: BufRead>(input: R, opts: &ParseOptions) -> Result<Vec<RawUpdate>, FlowError> {
    if !(opts.tick_size.is_finite() && opts.tick_size > 0.0) {
        return Err(LobError::BadTick(opts.tick_size).into());
    }
    let mut out = Vec::new();
    let mut pending: Option<(usize, Snapshot)> = None;
    let mut last_ts = i64::MIN;
    let mut saw_header = false;
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !saw_header {
            let expected = ["ts_ns", "kind", "side", "level", "price", "size"];
            let ok = (fields.len() == 6 || (fields.len() == 7 && fields[6] == "aggressor"))
                && fields[..6] == expected;
            if !ok {
                return Err(FlowError::Parse {
                    line: lineno,
                    msg: "expected header 'ts_ns,kind,side,level,price,size[,aggressor]'".into(),
                });
            }
            saw_header = true;
            continue;
        }
        let perr = |msg: String| FlowError::Parse { line: lineno, msg };
        if fields.len() < 6 || fields.len() > 7 {
            return Err(perr(format!("expected 6 or 7 fields, found {}", fields.len())));
        }
        let mut ts: i64 = fields[0]
            .parse()
            .map_err(|e| perr(format!("bad ts_ns '{}': {e}", fields[0])))?;
        if ts < last_ts {
            let by = last_ts - ts;
            if by > opts.regression_tolerance_ns {
                return Err(FlowError::Regression {
                    line: lineno,
                    ts,
                    by,
                    tol: opts.regression_tolerance_ns,
                });
            }
            ts = last_ts;
        }
        last_ts = ts;
        let size: i64 = fields[5]
            .parse()
            .map_err(|e| perr(format!("bad size '{}': {e}", fields[5])))?;
        if size < 0 {
            return Err(perr(format!("negative size {size}")));
        }
        let price: f64 = fields[4]
            .parse()
            .map_err(|e| perr(format!("bad price '{}': {e}", fields[4])))?;
        let ticks = price / opts.tick_size;
        let price_ticks = ticks.round();
        if !price.is_finite() || (ticks - price_ticks).abs() > 1e-6 {
            return Err(perr(format!("price {price} is off the {} tick grid", opts.tick_size)));
        }
        let price_ticks = price_ticks as i64;
        match fields[1].to_ascii_lowercase().as_str() {
            "book" | "snapshot" | "book_snapshot" => {
                let side = Side::from_str(fields[2]).map_err(perr)?;
                let level: usize = fields[3]
                    .parse()
                    .map_err(|e| perr(format!("bad level '{}': {e}", fields[3])))?;
                if level == 0 {
                    return Err(perr("level must be >= 1".into()));
                }
                if pending.as_ref().is_some_and(|(_, s)| s.ts_ns != ts) {
                    let (l, snap) = pending.take().expect("checked");
                    out.push(RawUpdate::Snapshot(check_snapshot(snap, l)?));
                }
                let (_, snap) = pending.get_or_insert_with(|| {
                    (
                        lineno,
                        Snapshot {
                            ts_ns: ts,
                            bids: Vec::new(),
                            asks: Vec::new(),
                        },
                    )
                });
                let rows = match side {
                    Side::Bid => &mut snap.bids,
                    Side::Ask => &mut snap.asks,
                };
                if level != rows.len() + 1 {
                    return Err(perr(format!("{side} level {level} out of order")));
                }
                rows.push((price_ticks, size as u64));
            }
            "trade" => {
                if let Some((l, snap)) = pending.take() {
                    out.push(RawUpdate::Snapshot(check_snapshot(snap, l)?));
                }
                let mut side = if fields[2].is_empty() {
                    None
                } else {
                    Some(Side::from_str(fields[2]).map_err(perr)?)
                };
                if side.is_none() {
                    if let Some(aggr) = fields.get(6).filter(|a| !a.is_empty()) {
                        // a buyer lifts the ask, a seller hits the bid
                        side = Some(Side::from_str(aggr).map_err(perr)?.opposite());
                    }
                }
                if size == 0 {
                    return Err(perr("trade of size 0".into()));
                }
                out.push(RawUpdate::Trade(Trade {
                    ts_ns: ts,
                    price_ticks,
                    size: size as u64,
                    side,
                }));
            }
            other => return Err(perr(format!("unknown kind '{other}'"))),
        }
    }
    if let Some((l, snap)) = pending.take() {
        out.push(RawUpdate::Snapshot(check_snapshot(snap, l)?));
    }
    Ok(out)
}

fn check_snapshot(snap: Snapshot, line: usize) -> Result<Snapshot, FlowError> {
    let err = |msg: &str| FlowError::Parse {
        line,
        msg: msg.to_string(),
    };
    if snap.bids.windows(2).any(|w| w[1].0 >= w[0].0) {
        return Err(err("bid prices must strictly decrease with level"));
    }
    if snap.asks.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(err("ask prices must strictly increase with level"));
    }
    if let (Some(b), Some(a)) = (best_price(&snap.bids), best_price(&snap.asks)) {
        if b >= a {
            return Err(err("crossed snapshot"));
        }
    }
    Ok(snap)
}

fn best_price(rows: &[(i64, u64)]) -> Option<i64> {
    rows.iter().find(|r| r.1 > 0).map(|r| r.0)
}

/// Reference price (half ticks) implied by a two-sided snapshot: the mid when
/// the spread is odd, otherwise the candidate half a tick from the mid that is
/// closest to `previous`.
pub fn snapshot_reference(snap: &Snapshot, previous: Option<i64>) -> Option<i64> {
    let b = best_price(&snap.bids)?;
    let a = best_price(&snap.asks)?;
    let mid = a + b;
    if (a - b) % 2 == 1 {
        return Some(mid);
    }
    let (lo, hi) = (mid - 1, mid + 1);
    Some(match previous {
        Some(p) if (hi - p).abs() < (lo - p).abs() => hi,
        _ => lo,
    })
}

/// Queue sizes a snapshot implies for each level of a band around
/// `ref_half_ticks`. `None` marks levels beyond the deepest listed price,
/// whose size the snapshot does not reveal.
pub fn map_snapshot(snap: &Snapshot, ref_half_ticks: i64, depth: usize) -> [Vec<Option<u64>>; 2] {
    let mut out = [vec![None; depth], vec![None; depth]];
    for side in Side::BOTH {
        let rows = snap.side(side);
        let Some(&(deepest, _)) = rows.last() else { continue };
        for level in 1..=depth {
            let price_half = ref_half_ticks + side.sign() * (2 * level as i64 - 1);
            if price_half % 2 != 0 {
                continue;
            }
            let price = price_half / 2;
            let beyond = match side {
                Side::Bid => price < deepest,
                Side::Ask => price > deepest,
            };
            if beyond {
                continue;
            }
            let size = rows.iter().find(|r| r.0 == price).map_or(0, |r| r.1);
            out[side.index()][level - 1] = Some(size);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructOptions {
    pub depth: usize,
    pub tick_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub log: EventLog,
    pub snapshots: usize,
    /// Trade-matched consumption below the best level, emitted as `C`.
    pub market_beyond_best: u64,
    /// Trade volume that found no matching negative delta.
    pub unmatched_trade_volume: u64,
}

/// Turns snapshots and trades into an event log. The first two-sided snapshot
/// becomes the initial book; each later snapshot yields, in order: reference
/// moves (clearing the queue that leaves the band first), then one consuming
/// event per negative level delta and one `L` per positive delta.
pub fn reconstruct_flow(updates: &[RawUpdate], opts: &ReconstructOptions) -> Result<Reconstruction, FlowError> {
    if opts.depth == 0 {
        return Err(LobError::ZeroDepth.into());
    }
    let first = updates.iter().position(|u| match u {
        RawUpdate::Snapshot(s) => snapshot_reference(s, None).is_some(),
        RawUpdate::Trade(_) => false,
    });
    let Some(first) = first else {
        return Err(FlowError::NoSnapshot);
    };
    let RawUpdate::Snapshot(first_snap) = &updates[first] else { unreachable!() };
    let ref0 = snapshot_reference(first_snap, None).expect("two-sided");
    let mapped = map_snapshot(first_snap, ref0, opts.depth);
    let fill = |v: &Vec<Option<u64>>| v.iter().map(|q| q.unwrap_or(0)).collect::<Vec<_>>();
    let initial = LobState::new(opts.tick_size, ref0, fill(&mapped[0]), fill(&mapped[1]))?;
    let end_ns = updates.last().map_or(first_snap.ts_ns, |u| u.ts_ns()) + 1;
    let mut rec = Reconstruction {
        log: EventLog::new(initial.clone(), first_snap.ts_ns, end_ns),
        snapshots: 1,
        market_beyond_best: 0,
        unmatched_trade_volume: 0,
    };
    let mut state = initial;
    let mut em = Emitter {
        last_event: HashMap::new(),
        window_start: first_snap.ts_ns,
    };
    let mut trades: Vec<Trade> = Vec::new();

    for update in &updates[first + 1..] {
        let snap = match update {
            RawUpdate::Trade(t) => {
                trades.push(*t);
                continue;
            }
            RawUpdate::Snapshot(s) => s,
        };
        rec.snapshots += 1;
        let ts = snap.ts_ns;
        let emit = |em: &mut Emitter, state: &mut LobState, log: &mut EventLog, eta: EventType, side: Side, level: usize, size: u64| {
            em.emit(ts, state, log, eta, side, level, size)
        };
        // trade volume available per (price, side)
        let mut avail: Vec<Trade> = std::mem::take(&mut trades);
        let mut take_trades = |price: i64, side: Side, want: u64| -> u64 {
            let mut got = 0;
            for t in avail.iter_mut().rev() {
                if got == want {
                    break;
                }
                if t.price_ticks == price && t.side.is_none_or(|s| s == side) {
                    let m = t.size.min(want - got);
                    t.size -= m;
                    got += m;
                }
            }
            got
        };

        if let Some(new_ref) = snapshot_reference(snap, Some(state.ref_half_ticks)) {
            while state.ref_half_ticks != new_ref {
                let toward = if new_ref > state.ref_half_ticks { Side::Ask } else { Side::Bid };
                let leaving = state.side(toward)[0];
                if leaving > 0 {
                    let price = state.level_price_half_ticks(toward, 1) / 2;
                    let traded = take_trades(price, toward, leaving);
                    if traded > 0 {
                        emit(&mut em, &mut state, &mut rec.log, EventType::Market, toward, 1, traded);
                    }
                    if leaving > traded {
                        emit(&mut em, &mut state, &mut rec.log, EventType::Cancel, toward, 1, leaving - traded);
                    }
                }
                let mut probe = state.clone();
                probe.shift_reference(toward, 0);
                let deep = map_snapshot(snap, probe.ref_half_ticks, opts.depth)[toward.index()][opts.depth - 1];
                let mv = RefMove {
                    toward,
                    refill: deep.unwrap_or(0),
                };
                state.shift_reference(mv.toward, mv.refill);
                em.last_event.clear();
                em.window_start = ts;
                rec.log.push(FlowItem::Move { ts_ns: ts, mv }, &state);
            }
        }

        let target = map_snapshot(snap, state.ref_half_ticks, opts.depth);
        for side in Side::BOTH {
            for level in 1..=opts.depth {
                let Some(want) = target[side.index()][level - 1] else { continue };
                let have = state.side(side)[level - 1];
                if want >= have {
                    continue;
                }
                let drop = have - want;
                let price = state.level_price_half_ticks(side, level) / 2;
                let traded = take_trades(price, side, drop);
                if traded > 0 && level > 1 {
                    rec.market_beyond_best += 1;
                    emit(&mut em, &mut state, &mut rec.log, EventType::Cancel, side, level, drop);
                    continue;
                }
                if traded > 0 {
                    emit(&mut em, &mut state, &mut rec.log, EventType::Market, side, level, traded);
                }
                if drop > traded {
                    emit(&mut em, &mut state, &mut rec.log, EventType::Cancel, side, level, drop - traded);
                }
            }
        }
        for side in Side::BOTH {
            for level in 1..=opts.depth {
                let Some(want) = target[side.index()][level - 1] else { continue };
                let have = state.side(side)[level - 1];
                if want > have {
                    emit(&mut em, &mut state, &mut rec.log, EventType::Limit, side, level, want - have);
                }
            }
        }
        rec.unmatched_trade_volume += avail.iter().map(|t| t.size).sum::<u64>();
    }
    rec.unmatched_trade_volume += trades.iter().map(|t| t.size).sum::<u64>();
    Ok(rec)
}

struct Emitter {
    last_event: HashMap<(Side, usize), i64>,
    window_start: i64,
}

impl Emitter {
    #[allow(clippy::too_many_arguments)]
    fn emit(&mut self, ts: i64, state: &mut LobState, log: &mut EventLog, eta: EventType, side: Side, level: usize, size: u64) {
        let since = self.last_event.get(&(side, level)).copied().unwrap_or(self.window_start);
        let ev = OrderEvent {
            ts_ns: ts,
            eta,
            side,
            level,
            size,
            dt_ns: (ts - since).max(0) as u64,
            q_before: state.side(side)[level - 1],
        };
        state.apply(&ev).expect("reconstructed events fit the book");
        self.last_event.insert((side, level), ts);
        log.push(FlowItem::Order(ev), state);
    }
}

/// Daily trading window `[open, close)` in UTC time of day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub open_ns: i64,
    pub close_ns: i64,
}

impl Session {
    pub fn new(open_ns: i64, close_ns: i64) -> Result<Self, FlowError> {
        if !(0 <= open_ns && open_ns < close_ns && close_ns <= NS_PER_DAY) {
            return Err(FlowError::BadSession(format!("open {open_ns} ns, close {close_ns} ns")));
        }
        Ok(Session { open_ns, close_ns })
    }

    /// Parses `HH:MM[:SS]-HH:MM[:SS]`.
    pub fn parse(s: &str) -> Result<Self, FlowError> {
        let (open, close) = s
            .split_once('-')
            .ok_or_else(|| FlowError::BadSession(format!("'{s}' is not OPEN-CLOSE")))?;
        Session::new(parse_time_of_day(open)?, parse_time_of_day(close)?)
    }

    pub fn hours(open_h: u32, close_h: u32) -> Result<Self, FlowError> {
        Session::new(open_h as i64 * 3600 * NS_PER_SEC, close_h as i64 * 3600 * NS_PER_SEC)
    }

    pub fn len_ns(&self) -> i64 {
        self.close_ns - self.open_ns
    }

    pub fn contains(&self, ts_ns: i64) -> bool {
        let tod = ts_ns.rem_euclid(NS_PER_DAY);
        self.open_ns <= tod && tod < self.close_ns
    }
}

impl Default for Session {
    fn default() -> Self {
        Session::hours(9, 18).expect("valid")
    }
}

/// Parses `HH:MM` or `HH:MM:SS` into nanoseconds since midnight.
pub fn parse_time_of_day(s: &str) -> Result<i64, FlowError> {
    let bad = || FlowError::BadSession(format!("bad time of day '{s}'"));
    let parts: Vec<&str> = s.trim().split(':').collect();
    if parts.is_empty() || parts.len() > 3 {
        return Err(bad());
    }
    let mut secs = 0i64;
    for (i, unit) in [3600i64, 60, 1].iter().enumerate() {
        if let Some(p) = parts.get(i) {
            let v: i64 = p.parse().map_err(|_| bad())?;
            if v < 0 || (i > 0 && v >= 60) {
                return Err(bad());
            }
            secs += v * unit;
        }
    }
    if secs > 86_400 {
        return Err(bad());
    }
    Ok(secs * NS_PER_SEC)
}

/// One trading day of records inside the session window.
#[derive(Debug, Clone, PartialEq)]
pub struct DayFlow {
    /// Days since the Unix epoch.
    pub day: i64,
    pub open_ns: i64,
    pub close_ns: i64,
    pub records: Vec<LogRecord>,
}

/// Splits records into days, drops everything outside the session window and
/// recomputes every `dt` so none spans a session boundary.
pub fn sessionize(records: &[LogRecord], session: &Session) -> Vec<DayFlow> {
    let mut days: Vec<DayFlow> = Vec::new();
    for rec in records {
        let ts = rec.item.ts_ns();
        if !session.contains(ts) {
            continue;
        }
        let day = ts.div_euclid(NS_PER_DAY);
        if days.last().is_none_or(|d| d.day != day) {
            days.push(DayFlow {
                day,
                open_ns: day * NS_PER_DAY + session.open_ns,
                close_ns: day * NS_PER_DAY + session.close_ns,
                records: Vec::new(),
            });
        }
        days.last_mut().expect("pushed").records.push(*rec);
    }
    for d in &mut days {
        recompute_dt(&mut d.records, d.open_ns);
    }
    days
}

/// [`sessionize`] for a whole log, with each day's window narrowed to the
/// span the log covers. A log that starts after the open or stops before the
/// close did not observe the rest of the session, and likelihood-based fits
/// must not count it as quiet time.
pub fn sessionize_log(log: &EventLog, session: &Session) -> Vec<DayFlow> {
    let mut days = sessionize(&log.records, session);
    for d in &mut days {
        let open = d.open_ns.max(log.start_ns);
        let close = d.close_ns.min(log.end_ns);
        if open < close && (open, close) != (d.open_ns, d.close_ns) {
            d.open_ns = open;
            d.close_ns = close;
            recompute_dt(&mut d.records, open);
        }
    }
    days
}

/// Resets every per-queue inter-arrival counter at `start_ns` and whenever
/// the reference price changes, then rewrites each event's `dt_ns`.
pub fn recompute_dt(records: &mut [LogRecord], start_ns: i64) {
    let mut reset = start_ns;
    let mut current_ref = None;
    let mut last: HashMap<(Side, usize), i64> = HashMap::new();
    for rec in records.iter_mut() {
        if current_ref.is_some_and(|r| r != rec.ref_half_ticks) {
            reset = rec.item.ts_ns();
            last.clear();
        }
        current_ref = Some(rec.ref_half_ticks);
        if let FlowItem::Order(ev) = &mut rec.item {
            let since = last.get(&(ev.side, ev.level)).copied().unwrap_or(reset);
            ev.dt_ns = (ev.ts_ns - since).max(0) as u64;
            last.insert((ev.side, ev.level), ev.ts_ns);
        }
    }
}

/// Maximal run of events under one reference price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSegment {
    pub ref_half_ticks: i64,
    pub start_ns: i64,
    pub events: Vec<OrderEvent>,
}

impl FlowSegment {
    pub fn ref_price_ticks(&self) -> f64 {
        self.ref_half_ticks as f64 * 0.5
    }
}

/// Cuts a day into constant-reference segments. The first segment starts at
/// the session open, later ones at the record that changed the reference.
/// Event `dt`s are taken as stored; run [`sessionize`] or [`recompute_dt`]
/// first if they may span resets.
pub fn segment_by_ref_price(day: &DayFlow) -> Vec<FlowSegment> {
    let mut segs: Vec<FlowSegment> = Vec::new();
    for rec in &day.records {
        let need_new = segs.last().is_none_or(|s| s.ref_half_ticks != rec.ref_half_ticks);
        if need_new {
            let start_ns = if segs.is_empty() { day.open_ns } else { rec.item.ts_ns() };
            segs.push(FlowSegment {
                ref_half_ticks: rec.ref_half_ticks,
                start_ns,
                events: Vec::new(),
            });
        }
        if let FlowItem::Order(ev) = rec.item {
            segs.last_mut().expect("pushed").events.push(ev);
        }
    }
    segs
}

/// Sessionized, segmented days of an event log.
pub fn log_segments(log: &EventLog, session: Option<&Session>) -> Vec<Vec<FlowSegment>> {
    match session {
        Some(s) => sessionize_log(log, s).iter().map(segment_by_ref_price).collect(),
        None => {
            let mut records = log.records.clone();
            recompute_dt(&mut records, log.start_ns);
            let day = DayFlow {
                day: log.start_ns.div_euclid(NS_PER_DAY),
                open_ns: log.start_ns,
                close_ns: log.end_ns,
                records,
            };
            vec![segment_by_ref_price(&day)]
        }
    }
}

/// Descriptive statistics of the events at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    pub n_limit: u64,
    /// Includes full cancellations.
    pub n_cancel: u64,
    /// Includes full-queue trades.
    pub n_market: u64,
    /// Average event size in lots; `None` when the level saw no event.
    pub aes: Option<f64>,
    /// Average inter-arrival time in milliseconds.
    pub ait_ms: Option<f64>,
}

pub fn level_stats<'a, I>(events: I, level: usize) -> LevelStats
where
    I: IntoIterator<Item = &'a OrderEvent>,
{
    let mut s = LevelStats {
        level,
        n_limit: 0,
        n_cancel: 0,
        n_market: 0,
        aes: None,
        ait_ms: None,
    };
    let mut size_sum = 0u128;
    let mut dt_sum = 0u128;
    for ev in events.into_iter().filter(|e| e.level == level) {
        match ev.eta.base() {
            EventType::Limit => s.n_limit += 1,
            EventType::Cancel => s.n_cancel += 1,
            _ => s.n_market += 1,
        }
        size_sum += ev.size as u128;
        dt_sum += ev.dt_ns as u128;
    }
    let n = s.n_limit + s.n_cancel + s.n_market;
    if n > 0 {
        s.aes = Some(size_sum as f64 / n as f64);
        s.ait_ms = Some(dt_sum as f64 / n as f64 * 1e-6);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(ts: i64, bids: &[(i64, u64)], asks: &[(i64, u64)]) -> RawUpdate {
        RawUpdate::Snapshot(Snapshot {
            ts_ns: ts,
            bids: bids.to_vec(),
            asks: asks.to_vec(),
        })
    }

    fn trade(ts: i64, price: i64, size: u64, side: Side) -> RawUpdate {
        RawUpdate::Trade(Trade {
            ts_ns: ts,
            price_ticks: price,
            size,
            side: Some(side),
        })
    }

    fn opts() -> ReconstructOptions {
        ReconstructOptions {
            depth: 2,
            tick_size: 1.0,
        }
    }

    fn orders(r: &Reconstruction) -> Vec<OrderEvent> {
        r.log.orders().copied().collect()
    }

    #[test]
    fn parse_empty_and_single_line() {
        let header = "ts_ns,kind,side,level,price,size\n";
        assert!(parse_stream(header.as_bytes(), &ParseOptions::default()).unwrap().is_empty());
        let one = format!("{header}5,book,bid,1,99,3\n");
        let ups = parse_stream(one.as_bytes(), &ParseOptions::default()).unwrap();
        assert_eq!(ups, vec![snap(5, &[(99, 3)], &[])]);
    }

    #[test]
    fn parse_rejects_negative_size_with_line() {
        let text = "ts_ns,kind,side,level,price,size\n5,book,bid,1,99,3\n6,trade,ask,1,100,-2\n";
        match parse_stream(text.as_bytes(), &ParseOptions::default()) {
            Err(FlowError::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("negative"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_regression_tolerance_and_tick_grid() {
        let text = "ts_ns,kind,side,level,price,size,aggressor\n100,trade,,0,1.25,2,buy\n95,trade,bid,0,1.00,1,\n";
        let opts = ParseOptions {
            tick_size: 0.25,
            regression_tolerance_ns: 10,
        };
        let ups = parse_stream(text.as_bytes(), &opts).unwrap();
        assert_eq!(
            ups[0],
            RawUpdate::Trade(Trade {
                ts_ns: 100,
                price_ticks: 5,
                size: 2,
                side: Some(Side::Ask)
            })
        );
        assert_eq!(ups[1].ts_ns(), 100);
        let strict = ParseOptions {
            regression_tolerance_ns: 1,
            ..opts
        };
        assert!(matches!(
            parse_stream(text.as_bytes(), &strict),
            Err(FlowError::Regression { line: 3, .. })
        ));
        let off = "ts_ns,kind,side,level,price,size\n1,trade,ask,0,1.1,1\n";
        assert!(parse_stream(off.as_bytes(), &opts).is_err());
        assert!(parse_stream("ts,kind\n".as_bytes(), &opts).is_err());
    }

    #[test]
    fn positive_delta_is_limit() {
        let ups = vec![snap(0, &[(99, 5)], &[(100, 10), (101, 3)]), snap(10, &[(99, 5)], &[(100, 14), (101, 3)])];
        let r = reconstruct_flow(&ups, &opts()).unwrap();
        let ev = orders(&r);
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].eta, ev[0].side, ev[0].level, ev[0].size, ev[0].q_before), (EventType::Limit, Side::Ask, 1, 4, 10));
    }

    #[test]
    fn negative_delta_with_trade_is_market() {
        let ups = vec![
            snap(0, &[(99, 5)], &[(100, 10), (101, 3)]),
            trade(5, 100, 4, Side::Ask),
            snap(10, &[(99, 5)], &[(100, 6), (101, 3)]),
        ];
        let ev = orders(&reconstruct_flow(&ups, &opts()).unwrap());
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].eta, ev[0].size), (EventType::Market, 4));
    }

    #[test]
    fn negative_delta_without_trade_is_cancel() {
        let ups = vec![snap(0, &[(99, 5)], &[(100, 10), (101, 3)]), snap(10, &[(99, 5)], &[(100, 6), (101, 3)])];
        let ev = orders(&reconstruct_flow(&ups, &opts()).unwrap());
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].eta, ev[0].size), (EventType::Cancel, 4));
    }

    #[test]
    fn price_shift_reindexes_before_deltas() {
        // ask 100 is eaten, the book moves up one tick
        let ups = vec![
            snap(0, &[(99, 5), (98, 2)], &[(100, 3), (101, 4)]),
            trade(5, 100, 3, Side::Ask),
            snap(10, &[(100, 1), (99, 5)], &[(101, 4), (102, 7)]),
        ];
        let r = reconstruct_flow(&ups, &opts()).unwrap();
        let final_state = r.log.replay(|_, _, _| {}).unwrap();
        assert_eq!(final_state.asks, vec![4, 7]);
        assert_eq!(final_state.bids, vec![1, 5]);
        assert_eq!(r.log.summary.ref_moves, 1);
        let first = orders(&r)[0];
        assert_eq!((first.eta, first.size, first.q_before), (EventType::Market, 3, 3));
    }

    #[test]
    fn even_spread_reference_follows_previous() {
        let s = Snapshot {
            ts_ns: 0,
            bids: vec![(10, 1)],
            asks: vec![(12, 1)],
        };
        assert_eq!(snapshot_reference(&s, None), Some(21));
        assert_eq!(snapshot_reference(&s, Some(25)), Some(23));
        let odd = Snapshot {
            ts_ns: 0,
            bids: vec![(10, 1)],
            asks: vec![(11, 1)],
        };
        assert_eq!(snapshot_reference(&odd, Some(99)), Some(21));
    }

    fn rec_at(ts: i64, ref_half: i64, side: Side, level: usize) -> LogRecord {
        LogRecord {
            item: FlowItem::Order(OrderEvent {
                ts_ns: ts,
                eta: EventType::Limit,
                side,
                level,
                size: 1,
                dt_ns: 0,
                q_before: 0,
            }),
            ref_half_ticks: ref_half,
            mid_half_ticks: ref_half,
        }
    }

    const H: i64 = 3600 * NS_PER_SEC;

    #[test]
    fn sessionize_drops_outside_and_splits_days() {
        let recs = vec![
            rec_at(9 * H - 60 * NS_PER_SEC, 1, Side::Bid, 1),
            rec_at(9 * H + NS_PER_SEC, 1, Side::Bid, 1),
            rec_at(9 * H + 3 * NS_PER_SEC, 1, Side::Bid, 1),
            rec_at(18 * H, 1, Side::Bid, 1),
            rec_at(NS_PER_DAY + 10 * H, 1, Side::Bid, 1),
        ];
        let days = sessionize(&recs, &Session::default());
        assert_eq!(days.len(), 2);
        assert_eq!(days[0].records.len(), 2);
        let dts: Vec<u64> = days
            .iter()
            .flat_map(|d| d.records.iter().filter_map(|r| r.item.as_order()).map(|e| e.dt_ns))
            .collect();
        assert_eq!(dts, vec![NS_PER_SEC as u64, 2 * NS_PER_SEC as u64, H as u64]);
    }

    #[test]
    fn log_windows_shrink_to_the_observed_span() {
        let state = LobState::new(1.0, 1, vec![1], vec![1]).unwrap();
        let mut log = EventLog::new(state, 9 * H + 1800 * NS_PER_SEC, 11 * H);
        log.records = vec![rec_at(10 * H, 1, Side::Bid, 1), rec_at(10 * H + 5, 1, Side::Bid, 1)];
        let days = sessionize_log(&log, &Session::default());
        assert_eq!((days[0].open_ns, days[0].close_ns), (9 * H + 1800 * NS_PER_SEC, 11 * H));
        assert_eq!(days[0].records[0].item.as_order().unwrap().dt_ns, 1800 * NS_PER_SEC as u64);
        // a log covering the whole session keeps the session window
        log.start_ns = 8 * H;
        log.end_ns = 19 * H;
        let days = sessionize_log(&log, &Session::default());
        assert_eq!((days[0].open_ns, days[0].close_ns), (9 * H, 18 * H));
    }

    #[test]
    fn all_inside_is_identity() {
        let recs = vec![rec_at(10 * H, 1, Side::Ask, 1), rec_at(10 * H + 5, 1, Side::Ask, 2)];
        let days = sessionize(&recs, &Session::default());
        assert_eq!(days.len(), 1);
        assert_eq!(days[0].records.len(), 2);
    }

    #[test]
    fn segmentation_partitions_and_resets() {
        let base = 10 * H;
        let recs = vec![
            rec_at(base + 1, 1, Side::Bid, 1),
            rec_at(base + 2, 3, Side::Bid, 1),
            rec_at(base + 5, 3, Side::Bid, 1),
            rec_at(base + 7, 5, Side::Ask, 1),
            rec_at(base + 8, 3, Side::Ask, 1),
        ];
        let days = sessionize(&recs, &Session::default());
        let segs = segment_by_ref_price(&days[0]);
        assert_eq!(segs.len(), 4);
        let joined: Vec<OrderEvent> = segs.iter().flat_map(|s| s.events.clone()).collect();
        let orig: Vec<OrderEvent> = days[0].records.iter().filter_map(|r| r.item.as_order().copied()).collect();
        assert_eq!(joined, orig);
        assert_eq!(segs[1].events[0].dt_ns, 0);
        assert_eq!(segs[1].events[1].dt_ns, 3);
        let constant = vec![rec_at(base, 1, Side::Bid, 1), rec_at(base + 1, 1, Side::Bid, 1)];
        assert_eq!(segment_by_ref_price(&sessionize(&constant, &Session::default())[0]).len(), 1);
    }

    #[test]
    fn level_stats_moments() {
        let mk = |size, dt_ms: u64| OrderEvent {
            ts_ns: 0,
            eta: EventType::Cancel,
            side: Side::Bid,
            level: 1,
            size,
            dt_ns: dt_ms * 1_000_000,
            q_before: 10,
        };
        let evs = [mk(2, 100), mk(4, 300), mk(6, 200)];
        let s = level_stats(&evs, 1);
        assert_eq!(s.aes, Some(4.0));
        assert_eq!(s.ait_ms, Some(200.0));
        assert_eq!(s.n_cancel, 3);
        let empty = level_stats(&evs, 2);
        assert_eq!(empty.aes, None);
        assert_eq!(empty.n_limit + empty.n_cancel + empty.n_market, 0);
    }

    #[test]
    fn time_of_day_parsing() {
        assert_eq!(parse_time_of_day("09:00").unwrap(), 9 * H);
        assert_eq!(parse_time_of_day("17:30:15").unwrap(), 17 * H + (30 * 60 + 15) * NS_PER_SEC);
        assert!(parse_time_of_day("9:75").is_err());
        assert_eq!(Session::parse("10:00-14:00").unwrap(), Session::hours(10, 14).unwrap());
        assert!(Session::parse("14:00-10:00").is_err());
    }
}
