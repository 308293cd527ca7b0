//! Discrete-event simulation of a calibrated model.
//!
//! Each of the `2K` queues runs an exponential clock with rate `Λ(n)` of its
//! current bucket. The next event is the minimum of those clocks, drawn by
//! superposition: one exponential with the summed rate, then a queue with
//! probability proportional to its total, then a key inside the queue. After
//! an event only the touched queue's total is recomputed; the other clocks
//! are still exponential by memorylessness. A reference move re-indexes every
//! queue, so all totals are refreshed then.
//!
//! Random numbers come from `ChaCha8Rng::seed_from_u64(seed)`. Per event the
//! draws are consumed in a fixed order (waiting time, queue, key, size, then
//! the theta draw and refill on a depletion), so a seed fixes the log on any
//! platform.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::calibration::{IntensityTable, RateKey, SizeBucketing};
use crate::dist::SizeDistribution;
use crate::eventlog::{EventLog, FlowItem};
use crate::flow::NS_PER_SEC;
use crate::hawkes::{self, component_meaning, HawkesError};
use crate::lob::{LobError, LobState, OrderEvent, RefPricePolicy};
use crate::model::{LevelSizes, Model, ModelError, ModelVariant};
use crate::types::{EventType, Side};

/// 09:00 UTC on day 0.
pub const DEFAULT_START_NS: i64 = 9 * 3600 * NS_PER_SEC;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("every queue has zero intensity at t = {t_ns} ns; the book needs a refill")]
    Stalled { t_ns: i64 },
    #[error(transparent)]
    Lob(#[from] LobError),
    #[error(transparent)]
    Hawkes(#[from] HawkesError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialBook {
    /// Every queue drawn from its level's stationary queue law.
    Stationary,
    Fixed(LobState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub variant: ModelVariant,
    /// Seconds. Zero gives an empty log.
    pub horizon_s: f64,
    pub seed: u64,
    /// Number of levels per side; defaults to the model depth.
    pub depth: Option<usize>,
    /// Overrides the model's theta.
    pub theta: Option<f64>,
    pub init: InitialBook,
    pub start_ns: i64,
}

impl SimConfig {
    pub fn new(variant: ModelVariant, horizon_s: f64, seed: u64) -> Self {
        SimConfig {
            variant,
            horizon_s,
            seed,
            depth: None,
            theta: None,
            init: InitialBook::Stationary,
            start_ns: DEFAULT_START_NS,
        }
    }

    fn end_ns(&self) -> Result<i64, EngineError> {
        if !(self.horizon_s.is_finite() && self.horizon_s >= 0.0) {
            return Err(EngineError::Config(format!("horizon {} s", self.horizon_s)));
        }
        Ok(self.start_ns + (self.horizon_s * 1e9).round() as i64)
    }
}

/// Per-bucket cumulative rates of one queue, with impossible events masked:
/// consuming keys on an empty queue and market orders beyond level 1.
#[derive(Debug, Clone)]
struct QueueClock {
    table_aes: f64,
    n_max: u64,
    keys: Vec<RateKey>,
    cum: Vec<Vec<f64>>,
}

impl QueueClock {
    fn new(table: &IntensityTable, level: usize) -> Self {
        let cum = table
            .buckets
            .iter()
            .map(|b| {
                let mut acc = 0.0;
                table
                    .keys
                    .iter()
                    .zip(&b.rates)
                    .map(|(k, &r)| {
                        let masked = (k.eta.is_consuming() && b.n == 0) || (k.eta.is_market() && level > 1);
                        if !masked {
                            acc += r;
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        QueueClock {
            table_aes: table.aes,
            n_max: table.n_max,
            keys: table.keys.clone(),
            cum,
        }
    }

    fn bucket(&self, q: u64) -> usize {
        if q == 0 {
            return 0;
        }
        ((q as f64 / self.table_aes).ceil() as u64).min(self.n_max) as usize
    }

    fn total(&self, q: u64) -> f64 {
        self.cum[self.bucket(q)].last().copied().unwrap_or(0.0)
    }

    fn pick(&self, q: u64, u: f64) -> RateKey {
        let cum = &self.cum[self.bucket(q)];
        let x = u * cum.last().copied().unwrap_or(0.0);
        let i = cum.partition_point(|&c| c <= x).min(cum.len() - 1);
        self.keys[i]
    }
}

/// How a drawn key becomes a lot size.
#[derive(Debug, Clone)]
enum SizePolicy {
    Unit(u64),
    Stationary { unit: u64, laws: LevelSizes },
    FullTypes { unit: u64, laws: LevelSizes },
    SizeAware { aes: f64, bucketing: SizeBucketing, laws: LevelSizes },
}

/// Outcome of a size draw: the size and whether it was cut down to the queue.
fn draw_size<R: Rng + ?Sized>(policy: &SizePolicy, key: RateKey, q: u64, rng: &mut R) -> (u64, bool) {
    let eta = key.eta;
    let law_or = |law: Option<&SizeDistribution>, unit: u64, rng: &mut R| law.map_or(unit, |d| d.sample(rng));
    let raw = match policy {
        SizePolicy::Unit(u) => *u,
        SizePolicy::Stationary { unit, laws } => law_or(laws.base(eta), *unit, rng),
        SizePolicy::FullTypes { unit, laws } => match eta {
            EventType::CancelAll | EventType::MarketAll => return (q, false),
            EventType::Limit => law_or(laws.limit.as_ref(), *unit, rng),
            // a partial consumption leaves at least one lot behind when it can
            _ => {
                let law = laws.partial(eta).or(laws.base(eta));
                let cap = q.saturating_sub(1);
                match law.and_then(|d| d.sample_at_most(cap, rng)) {
                    Some(s) => s,
                    None => cap.max(1),
                }
            }
        },
        SizePolicy::SizeAware { aes, bucketing, laws } => {
            let s = key.size_bucket.unwrap_or(1);
            match laws.within(eta.base(), s) {
                Some(d) => d.sample(rng),
                None => bucketing.nominal_size(s, *aes),
            }
        }
    };
    let raw = raw.max(1);
    if eta.is_consuming() && raw > q {
        (q, true)
    } else {
        (raw, false)
    }
}

/// Read-only sampling tables for one (model, variant, depth).
#[derive(Debug, Clone)]
pub struct Sampler {
    depth: usize,
    /// Indexed `side.index() * depth + level - 1`.
    clocks: Vec<QueueClock>,
    sizes: Vec<SizePolicy>,
}

/// One drawn event, before it is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub dt_s: f64,
    pub side: Side,
    pub level: usize,
    pub eta: EventType,
    pub key: RateKey,
    pub size: u64,
    pub clipped: bool,
}

impl Sampler {
    pub fn new(model: &Model, variant: ModelVariant, depth: usize) -> Result<Self, EngineError> {
        model.supports(variant)?;
        if variant.is_hawkes() {
            return Err(EngineError::Config(format!("{variant} is not a queue-reactive variant")));
        }
        check_depth(model, depth)?;
        let mut clocks = Vec::with_capacity(2 * depth);
        for side in Side::BOTH {
            for lm in &model.levels[..depth] {
                let table = lm.table(side).ok_or_else(|| {
                    EngineError::Config(format!("level {} has no {side} table", lm.level))
                })?;
                clocks.push(QueueClock::new(table, lm.level));
            }
        }
        let sizes = model.levels[..depth]
            .iter()
            .map(|lm| {
                let unit = lm.unit_size();
                let laws = lm.sizes.clone();
                match variant {
                    ModelVariant::Qr => SizePolicy::Stationary { unit, laws },
                    ModelVariant::Ftqr => SizePolicy::FullTypes { unit, laws },
                    ModelVariant::Saqr => SizePolicy::SizeAware {
                        aes: lm.aes,
                        bucketing: lm.tables[0].bucketing,
                        laws,
                    },
                    _ => SizePolicy::Unit(unit),
                }
            })
            .collect();
        Ok(Sampler { depth, clocks, sizes })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    fn index(&self, side: Side, level: usize) -> usize {
        side.index() * self.depth + level - 1
    }

    fn queue_total(&self, state: &LobState, i: usize) -> f64 {
        let side = Side::BOTH[i / self.depth];
        self.clocks[i].total(state.side(side)[i % self.depth])
    }

    fn totals(&self, state: &LobState) -> Vec<f64> {
        (0..2 * self.depth).map(|i| self.queue_total(state, i)).collect()
    }

    fn draw<R: Rng + ?Sized>(&self, state: &LobState, totals: &[f64], rng: &mut R) -> Option<Draw> {
        let total: f64 = totals.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let e: f64 = rng.sample(Exp1);
        let dt_s = e / total;
        let mut x = rng.random::<f64>() * total;
        let mut i = totals.len() - 1;
        for (j, &t) in totals.iter().enumerate() {
            if x < t {
                i = j;
                break;
            }
            x -= t;
        }
        // rounding can land on a silent queue; take the last live one
        if totals[i] <= 0.0 {
            i = totals.iter().rposition(|&t| t > 0.0)?;
        }
        let side = Side::BOTH[i / self.depth];
        let level = i % self.depth + 1;
        let q = state.side(side)[level - 1];
        let key = self.clocks[i].pick(q, rng.random());
        let (size, clipped) = draw_size(&self.sizes[level - 1], key, q, rng);
        Some(Draw {
            dt_s,
            side,
            level,
            eta: key.eta,
            key,
            size,
            clipped,
        })
    }
}

fn check_depth(model: &Model, depth: usize) -> Result<(), EngineError> {
    if depth == 0 || depth > model.depth {
        return Err(EngineError::Config(format!(
            "depth {depth} outside 1..={}",
            model.depth
        )));
    }
    Ok(())
}

/// Draws the next event for `state`.
pub fn next_event<R: Rng + ?Sized>(sampler: &Sampler, state: &LobState, rng: &mut R) -> Result<Draw, EngineError> {
    if state.depth() != sampler.depth {
        return Err(EngineError::Config(format!(
            "book depth {} but sampler depth {}",
            state.depth(),
            sampler.depth
        )));
    }
    sampler
        .draw(state, &sampler.totals(state), rng)
        .ok_or(EngineError::Stalled { t_ns: 0 })
}

/// Book setup shared by the queue-reactive and Hawkes runs.
struct Book {
    state: LobState,
    policy: RefPricePolicy,
    /// Last event time per queue, or the last reset if later.
    last_ns: Vec<i64>,
    depth: usize,
}

impl Book {
    fn new<R: Rng + ?Sized>(model: &Model, cfg: &SimConfig, depth: usize, rng: &mut R) -> Result<Self, EngineError> {
        let theta = cfg.theta.unwrap_or(model.theta);
        // refills are strictly positive so a move can never cascade
        let refill: Vec<SizeDistribution> = model.levels[..depth]
            .iter()
            .map(|lm| match &lm.queue {
                Some(d) => d.clone(),
                None => SizeDistribution::degenerate(lm.unit_size()).expect("positive unit size"),
            })
            .collect();
        let policy = RefPricePolicy::new(theta, refill)?;
        let state = match &cfg.init {
            InitialBook::Fixed(s) => {
                if s.depth() != depth {
                    return Err(EngineError::Config(format!(
                        "initial book has depth {} but the run uses {depth}",
                        s.depth()
                    )));
                }
                s.clone()
            }
            InitialBook::Stationary => {
                let mut sides = [Vec::with_capacity(depth), Vec::with_capacity(depth)];
                for v in &mut sides {
                    for d in &policy.refill {
                        v.push(d.sample(rng));
                    }
                }
                let [bids, asks] = sides;
                LobState::new(model.tick_size, model.initial_ref_half_ticks, bids, asks)?
            }
        };
        Ok(Book {
            state,
            policy,
            last_ns: vec![cfg.start_ns; 2 * depth],
            depth,
        })
    }

    /// Applies one order, logs it and handles a depletion. Returns true when
    /// the reference price moved.
    fn apply<R: Rng + ?Sized>(
        &mut self,
        log: &mut EventLog,
        ts_ns: i64,
        eta: EventType,
        side: Side,
        level: usize,
        size: u64,
        rng: &mut R,
    ) -> Result<bool, EngineError> {
        let i = side.index() * self.depth + level - 1;
        let ev = OrderEvent {
            ts_ns,
            eta,
            side,
            level,
            size,
            dt_ns: (ts_ns - self.last_ns[i]) as u64,
            q_before: self.state.side(side)[level - 1],
        };
        let depleted = self.state.apply(&ev)?;
        self.last_ns[i] = ts_ns;
        log.push(FlowItem::Order(ev), &self.state);
        if !depleted {
            return Ok(false);
        }
        log.summary.depletions += 1;
        match self.state.transition(&self.policy, side, rng) {
            Some(mv) => {
                log.push(FlowItem::Move { ts_ns, mv }, &self.state);
                self.last_ns.fill(ts_ns);
                Ok(true)
            }
            None => Ok(false),
        }
    }
}

fn effective_depth(model: &Model, cfg: &SimConfig) -> Result<usize, EngineError> {
    let depth = cfg.depth.unwrap_or(model.depth);
    check_depth(model, depth)?;
    Ok(depth)
}

/// Simulates `cfg.horizon_s` seconds. Hawkes variants go through
/// [`run_hawkes`].
pub fn run(model: &Model, cfg: &SimConfig) -> Result<EventLog, EngineError> {
    if cfg.variant.is_hawkes() {
        return run_hawkes(model, cfg);
    }
    let end_ns = cfg.end_ns()?;
    let depth = effective_depth(model, cfg)?;
    let sampler = Sampler::new(model, cfg.variant, depth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut book = Book::new(model, cfg, depth, &mut rng)?;
    let mut log = EventLog::new(book.state.clone(), cfg.start_ns, end_ns);
    let mut totals = sampler.totals(&book.state);
    let mut now = cfg.start_ns;
    loop {
        let Some(d) = sampler.draw(&book.state, &totals, &mut rng) else {
            if now >= end_ns {
                break;
            }
            return Err(EngineError::Stalled { t_ns: now });
        };
        let dt_ns = ((d.dt_s * 1e9).round() as i64).max(1);
        if dt_ns > end_ns - now {
            break;
        }
        now += dt_ns;
        if d.clipped {
            log.summary.clipped += 1;
        }
        if book.apply(&mut log, now, d.eta, d.side, d.level, d.size, &mut rng)? {
            totals = sampler.totals(&book.state);
        } else {
            let i = sampler.index(d.side, d.level);
            totals[i] = sampler.queue_total(&book.state, i);
        }
    }
    Ok(log)
}

/// Hawkes flow at the best quotes replayed through the book. Consumption
/// larger than the queue is clipped; on an empty queue it is dropped.
pub fn run_hawkes(model: &Model, cfg: &SimConfig) -> Result<EventLog, EngineError> {
    model.supports(cfg.variant)?;
    let unit_sizes = match cfg.variant {
        ModelVariant::HawkesU => true,
        ModelVariant::HawkesS => false,
        v => return Err(EngineError::Config(format!("{v} is not a Hawkes variant"))),
    };
    let hm = model
        .hawkes
        .as_ref()
        .ok_or_else(|| EngineError::Config("model has no Hawkes block".into()))?;
    let end_ns = cfg.end_ns()?;
    let depth = effective_depth(model, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut book = Book::new(model, cfg, depth, &mut rng)?;
    let mut log = EventLog::new(book.state.clone(), cfg.start_ns, end_ns);
    let flow = hawkes::simulate(hm, cfg.horizon_s, &mut rng)?;
    let best = &model.levels[0];
    let unit = best.unit_size();
    let mut prev = cfg.start_ns;
    for e in flow {
        let ts = (cfg.start_ns + (e.t * 1e9).round() as i64).max(prev + 1);
        if ts > end_ns {
            break;
        }
        prev = ts;
        let (eta, side) = component_meaning(e.component);
        let q = book.state.side(side)[0];
        let mut size = if unit_sizes {
            unit
        } else {
            best.sizes.base(eta).map_or(unit, |d| d.sample(&mut rng))
        };
        if eta.is_consuming() {
            if q == 0 {
                log.summary.dropped += 1;
                continue;
            }
            if size > q {
                size = q;
                log.summary.clipped += 1;
            }
        }
        book.apply(&mut log, ts, eta, side, 1, size, &mut rng)?;
    }
    Ok(log)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::calibration::{IntensityTable, Variant};
    use crate::dist::Conditioning;
    use crate::hawkes::HawkesModel;
    use crate::model::{LevelModel, MODEL_SCHEMA};

    fn plain_keys() -> Vec<RateKey> {
        EventType::BASE.iter().map(|&e| RateKey::plain(e)).collect()
    }

    fn table(level: usize, variant: Variant, aes: f64, keys: Vec<RateKey>, rates: Vec<Vec<f64>>, side: Option<Side>) -> IntensityTable {
        let mut t = IntensityTable::from_rates(level, variant, aes, keys, rates).unwrap();
        t.side = side;
        t
    }

    pub(crate) fn model_with(variant: ModelVariant, theta: f64, levels: Vec<LevelModel>) -> Model {
        Model {
            schema: MODEL_SCHEMA.into(),
            variant,
            tick_size: 0.01,
            depth: levels.len(),
            theta,
            theta_fit: None,
            initial_ref_half_ticks: 20_001,
            levels,
            hawkes: None,
            hawkes_fit: None,
        }
    }

    fn level(level: usize, aes: f64, tables: Vec<IntensityTable>, sizes: LevelSizes) -> LevelModel {
        LevelModel {
            level,
            aes,
            stats: None,
            tables,
            sizes,
            queue: Some(SizeDistribution::from_sizes([2, 3, 4, 5], Conditioning::Stationary).unwrap()),
        }
    }

    /// Two-level QR model with generic queue-reactive rates.
    pub(crate) fn qr_model(theta: f64) -> Model {
        let r1: Vec<Vec<f64>> = (0..=10).map(|n| vec![1.2, 0.1 * n as f64, 0.08 * n as f64]).collect();
        let r2: Vec<Vec<f64>> = (0..=10).map(|n| vec![0.8, 0.1 * n as f64, 0.0]).collect();
        let sizes = LevelSizes {
            limit: Some(SizeDistribution::from_sizes([1, 1, 2, 3], Conditioning::Stationary).unwrap()),
            cancel: Some(SizeDistribution::from_sizes([1, 2, 2], Conditioning::Stationary).unwrap()),
            market: Some(SizeDistribution::from_sizes([1, 1, 4], Conditioning::Stationary).unwrap()),
            ..Default::default()
        };
        model_with(
            ModelVariant::Qr,
            theta,
            vec![
                level(1, 1.5, vec![table(1, Variant::Qr, 1.5, plain_keys(), r1, None)], sizes.clone()),
                level(2, 1.5, vec![table(2, Variant::Qr, 1.5, plain_keys(), r2, None)], sizes),
            ],
        )
    }

    #[test]
    fn same_seed_same_log() {
        let m = qr_model(0.5);
        let cfg = SimConfig::new(ModelVariant::Qr, 600.0, 7);
        let a = run(&m, &cfg).unwrap();
        let b = run(&m, &cfg).unwrap();
        assert!(a.records.len() > 1000);
        assert_eq!(a, b);
        let c = run(&m, &SimConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn log_replays_and_round_trips() {
        let m = qr_model(0.7);
        let log = run(&m, &SimConfig::new(ModelVariant::Qr, 900.0, 3)).unwrap();
        assert!(log.summary.ref_moves > 0);
        let mut last = i64::MIN;
        for ev in log.orders() {
            assert!(ev.ts_ns > last);
            last = ev.ts_ns;
        }
        log.replay(|_, _, _| {}).unwrap();
        let mut buf = Vec::new();
        log.write(&mut buf).unwrap();
        let back = EventLog::read(&buf[..]).unwrap();
        assert_eq!(back.records, log.records);
        assert_eq!(back.initial, log.initial);
        assert_eq!(back.summary.depletions, log.summary.depletions);
    }

    #[test]
    fn theta_zero_keeps_reference_fixed() {
        let m = qr_model(0.0);
        let log = run(&m, &SimConfig::new(ModelVariant::Qr, 1800.0, 11)).unwrap();
        assert!(log.summary.depletions > 0);
        assert_eq!(log.summary.ref_moves, 0);
        assert!(log.records.iter().all(|r| r.ref_half_ticks == m.initial_ref_half_ticks));
    }

    #[test]
    fn zero_horizon_gives_empty_log() {
        let log = run(&qr_model(0.5), &SimConfig::new(ModelVariant::Qr, 0.0, 1)).unwrap();
        assert!(log.records.is_empty());
        assert_eq!(log.start_ns, log.end_ns);
        assert!(run(&qr_model(0.5), &SimConfig::new(ModelVariant::Qr, -1.0, 1)).is_err());
    }

    fn one_level_sided(bid: Vec<Vec<f64>>, ask: Vec<Vec<f64>>) -> Model {
        let tables = vec![
            table(1, Variant::Qr, 1.0, plain_keys(), bid, Some(Side::Bid)),
            table(1, Variant::Qr, 1.0, plain_keys(), ask, Some(Side::Ask)),
        ];
        model_with(ModelVariant::Qr, 0.0, vec![level(1, 1.0, tables, LevelSizes::default())])
    }

    #[test]
    fn single_clock_waiting_time() {
        let m = one_level_sided(vec![vec![2.0, 0.0, 0.0]], vec![vec![0.0; 3]]);
        let sampler = Sampler::new(&m, ModelVariant::Qr, 1).unwrap();
        let state = LobState::flat(0.01, 20_001, 1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let d = next_event(&sampler, &state, &mut rng).unwrap();
            assert_eq!((d.eta, d.side, d.level), (EventType::Limit, Side::Bid, 1));
            sum += d.dt_s;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn superposition_picks_queue_by_rate() {
        let m = one_level_sided(vec![vec![1.0, 0.0, 0.0]], vec![vec![3.0, 0.0, 0.0]]);
        let sampler = Sampler::new(&m, ModelVariant::Qr, 1).unwrap();
        let state = LobState::flat(0.01, 20_001, 1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 10_000;
        let asks = (0..n)
            .filter(|_| next_event(&sampler, &state, &mut rng).unwrap().side == Side::Ask)
            .count();
        let f = asks as f64 / n as f64;
        assert!((f - 0.75).abs() < 0.01, "ask share {f}");
    }

    #[test]
    fn all_zero_rates_stall() {
        let m = one_level_sided(vec![vec![0.0, 1.0, 0.0]], vec![vec![0.0, 1.0, 0.0]]);
        let sampler = Sampler::new(&m, ModelVariant::Qr, 1).unwrap();
        let empty = LobState::flat(0.01, 20_001, 1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(next_event(&sampler, &empty, &mut rng), Err(EngineError::Stalled { .. })));
    }

    #[test]
    fn market_orders_only_hit_the_best_level() {
        let r: Vec<Vec<f64>> = (0..=5).map(|_| vec![1.0, 1.0, 1.0]).collect();
        let tables = |l| vec![table(l, Variant::Qr, 1.0, plain_keys(), r.clone(), None)];
        let m = model_with(
            ModelVariant::Qru,
            0.3,
            vec![level(1, 1.0, tables(1), LevelSizes::default()), level(2, 1.0, tables(2), LevelSizes::default())],
        );
        let log = run(&m, &SimConfig::new(ModelVariant::Qru, 300.0, 2)).unwrap();
        assert!(log.orders().all(|e| !e.eta.is_market() || e.level == 1));
        assert!(log.orders().all(|e| !e.eta.is_consuming() || e.q_before > 0));
        assert!(log.orders().all(|e| e.size == 1));
    }

    #[test]
    fn saqr_sizes_respect_the_queue() {
        let keys: Vec<RateKey> = std::iter::once(RateKey::sized(EventType::Limit, 1))
            .chain((1..=5).map(|s| RateKey::sized(EventType::Market, s)))
            .chain((1..=5).map(|s| RateKey::sized(EventType::Cancel, s)))
            .collect();
        let rates: Vec<Vec<f64>> = (0..=8)
            .map(|n| {
                let mut r = vec![2.0];
                r.extend((1..=10).map(|_| 0.05 * n as f64));
                r
            })
            .collect();
        let t = table(1, Variant::Saqr, 2.0, keys, rates, None);
        let mut m = model_with(ModelVariant::Saqr, 0.5, vec![level(1, 2.0, vec![t], LevelSizes::default())]);
        m.variant = ModelVariant::Saqr;
        let sampler = Sampler::new(&m, ModelVariant::Saqr, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for q in 1..=6 {
            let state = LobState::flat(0.01, 20_001, 1, q).unwrap();
            for _ in 0..2000 {
                let d = next_event(&sampler, &state, &mut rng).unwrap();
                if d.eta.is_consuming() {
                    assert!(d.size <= q);
                }
            }
        }
        let log = run(&m, &SimConfig::new(ModelVariant::Saqr, 600.0, 4)).unwrap();
        assert!(log.orders().all(|e| !e.eta.is_consuming() || e.size <= e.q_before));
        log.replay(|_, _, _| {}).unwrap();
    }

    #[test]
    fn ftqr_full_types_take_the_whole_queue() {
        let keys: Vec<RateKey> = EventType::ALL.iter().map(|&e| RateKey::plain(e)).collect();
        let rates: Vec<Vec<f64>> = (0..=6).map(|n| vec![1.5, 0.2 * n as f64, 0.1 * n as f64, 0.1, 0.1]).collect();
        let t = table(1, Variant::Ftqr, 1.0, keys, rates, None);
        let sizes = LevelSizes {
            limit: Some(SizeDistribution::from_sizes([1, 2, 3], Conditioning::Stationary).unwrap()),
            cancel_partial: Some(SizeDistribution::from_sizes([1, 2], Conditioning::Stationary).unwrap()),
            market_partial: Some(SizeDistribution::from_sizes([1, 3], Conditioning::Stationary).unwrap()),
            ..Default::default()
        };
        let mut m = model_with(ModelVariant::Ftqr, 0.5, vec![level(1, 1.0, vec![t], sizes)]);
        m.variant = ModelVariant::Ftqr;
        let log = run(&m, &SimConfig::new(ModelVariant::Ftqr, 600.0, 6)).unwrap();
        let mut full = 0;
        for e in log.orders() {
            match e.eta {
                EventType::CancelAll | EventType::MarketAll => {
                    assert_eq!(e.size, e.q_before);
                    full += 1;
                }
                EventType::Cancel | EventType::Market if e.q_before > 1 => assert!(e.size < e.q_before),
                _ => {}
            }
        }
        assert!(full > 0);
    }

    #[test]
    fn incompatible_variant_is_rejected() {
        let m = qr_model(0.5);
        assert!(run(&m, &SimConfig::new(ModelVariant::Saqr, 10.0, 1)).is_err());
        assert!(run(&m, &SimConfig::new(ModelVariant::HawkesU, 10.0, 1)).is_err());
        let deep = SimConfig {
            depth: Some(3),
            ..SimConfig::new(ModelVariant::Qr, 10.0, 1)
        };
        assert!(run(&m, &deep).is_err());
    }

    fn hawkes_model(variant: ModelVariant, hm: HawkesModel) -> Model {
        let mut m = qr_model(0.5);
        m.variant = variant;
        m.levels[0].aes = 2.4;
        for lm in &mut m.levels {
            lm.tables.clear();
        }
        m.hawkes = Some(hm);
        m.validate().unwrap();
        m
    }

    #[test]
    fn hawkes_unit_sizes() {
        let hm = HawkesModel::poisson(vec![1.0, 0.5, 0.4, 1.0, 0.5, 0.4]).unwrap();
        let m = hawkes_model(ModelVariant::HawkesU, hm);
        let log = run(&m, &SimConfig::new(ModelVariant::HawkesU, 600.0, 1)).unwrap();
        assert!(log.summary.events > 500);
        for e in log.orders() {
            assert_eq!(e.level, 1);
            if !e.eta.is_consuming() || e.q_before >= 3 {
                assert_eq!(e.size, 3);
            }
        }
        log.replay(|_, _, _| {}).unwrap();
    }

    #[test]
    fn poisson_hawkes_counts() {
        // alpha = 0: the total count over T is Poisson(T * sum(mu))
        let mu = vec![0.5, 0.3, 0.2, 0.5, 0.3, 0.2];
        let m = hawkes_model(ModelVariant::HawkesS, HawkesModel::poisson(mu).unwrap());
        let t = 20.0;
        let counts: Vec<f64> = (0..400)
            .map(|seed| {
                let log = run(&m, &SimConfig::new(ModelVariant::HawkesS, t, seed)).unwrap();
                (log.summary.events + log.summary.dropped) as f64
            })
            .collect();
        let mean = crate::stats::mean(&counts);
        let var = crate::stats::variance(&counts);
        assert!((mean - 40.0).abs() < 1.5, "mean {mean}");
        assert!((var / mean - 1.0).abs() < 0.2, "dispersion {}", var / mean);
    }

    #[test]
    fn self_exciting_trades_cluster() {
        let mut alpha = vec![vec![0.0; 6]; 6];
        alpha[2][2] = 2.4;
        alpha[5][5] = 2.4;
        let beta = vec![vec![3.0; 6]; 6];
        let hm = HawkesModel::new(vec![1.0, 0.5, 0.2, 1.0, 0.5, 0.2], alpha, beta).unwrap();
        let m = hawkes_model(ModelVariant::HawkesS, hm);
        let log = run(&m, &SimConfig::new(ModelVariant::HawkesS, 3600.0, 21)).unwrap();
        let mut bins = vec![0.0; 3600];
        for e in log.orders().filter(|e| e.eta.is_market()) {
            bins[((e.ts_ns - log.start_ns) / NS_PER_SEC) as usize] += 1.0;
        }
        let ratio = crate::stats::variance(&bins) / crate::stats::mean(&bins);
        assert!(ratio > 1.5, "variance/mean {ratio}");
    }
}
