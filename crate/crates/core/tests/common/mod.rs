//! Hand-built models and fixture writers shared by the integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;

use qrlob::calibration::{IntensityTable, RateKey, Variant};
use qrlob::model::{LevelModel, LevelSizes, Model, ModelVariant, MODEL_SCHEMA};
use qrlob::{Conditioning, EventLog, EventType, FlowItem, LobState, Side, SizeDistribution};

pub const TICK: f64 = 0.01;
pub const REF: i64 = 20_001;

pub fn plain_keys() -> Vec<RateKey> {
    EventType::BASE.iter().map(|&e| RateKey::plain(e)).collect()
}

pub fn table(level: usize, variant: Variant, aes: f64, keys: Vec<RateKey>, rates: Vec<Vec<f64>>) -> IntensityTable {
    IntensityTable::from_rates(level, variant, aes, keys, rates).unwrap()
}

pub fn dist(support: &[u64], weights: &[f64]) -> SizeDistribution {
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut probs = probs;
    let residue = 1.0 - probs.iter().sum::<f64>();
    probs[0] += residue;
    SizeDistribution::new(support.to_vec(), probs, Conditioning::Stationary).unwrap()
}

pub fn unit() -> SizeDistribution {
    SizeDistribution::degenerate(1).unwrap()
}

pub fn unit_sizes() -> LevelSizes {
    LevelSizes {
        limit: Some(unit()),
        cancel: Some(unit()),
        market: Some(unit()),
        ..Default::default()
    }
}

pub fn level(level: usize, aes: f64, tables: Vec<IntensityTable>, sizes: LevelSizes, queue: SizeDistribution) -> LevelModel {
    LevelModel {
        level,
        aes,
        stats: None,
        tables,
        sizes,
        queue: Some(queue),
    }
}

pub fn model(variant: ModelVariant, theta: f64, levels: Vec<LevelModel>) -> Model {
    let m = Model {
        schema: MODEL_SCHEMA.into(),
        variant,
        tick_size: TICK,
        depth: levels.len(),
        theta,
        theta_fit: None,
        initial_ref_half_ticks: REF,
        levels,
        hawkes: None,
        hawkes_fit: None,
    };
    m.validate().unwrap();
    m
}

/// Unit-size model with one level and `rates[n] = [L, C, M]`; queues above
/// the last bucket pool into it.
pub fn unit_model(rates: Vec<Vec<f64>>, theta: f64, queue: SizeDistribution) -> Model {
    model(
        ModelVariant::Qr,
        theta,
        vec![level(1, 1.0, vec![table(1, Variant::Qr, 1.0, plain_keys(), rates)], unit_sizes(), queue)],
    )
}

/// Birth-death queue: `λL(n) = l`, `λC(n) = c n`, `λM(n) = m n`.
pub fn birth_death_rates(l: f64, c: f64, m: f64, n_max: usize) -> Vec<Vec<f64>> {
    (0..=n_max).map(|n| vec![l, c * n as f64, m * n as f64]).collect()
}

/// Stationary law of the birth-death queue above, truncated at `n_max`.
pub fn birth_death_law(l: f64, c: f64, m: f64, n_max: usize) -> Vec<f64> {
    let mut w = vec![1.0f64];
    for n in 1..=n_max {
        let prev = w[n - 1];
        w.push(prev * l / ((c + m) * n as f64));
    }
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}

/// Queue-reactive rates of one level in AES units: constant inflow, outflow
/// growing linearly with the queue.
pub fn reactive_rates(l: f64, c: f64, m: f64, n_max: usize) -> Vec<Vec<f64>> {
    (0..=n_max).map(|n| vec![l, c * n as f64, m * n as f64]).collect()
}

/// Five-level QR model whose level-1 event rate matches an average
/// inter-event time near 56 ms.
pub fn bund_like_qr() -> Model {
    let sizes = LevelSizes {
        limit: Some(dist(&[1, 2, 3, 5, 10, 20], &[30.0, 20.0, 15.0, 15.0, 12.0, 8.0])),
        cancel: Some(dist(&[1, 2, 3, 5, 10, 20], &[30.0, 20.0, 15.0, 15.0, 12.0, 8.0])),
        market: Some(dist(&[1, 2, 5, 10, 25], &[35.0, 20.0, 20.0, 15.0, 10.0])),
        ..Default::default()
    };
    let queue = dist(&[20, 40, 60, 80, 100, 150], &[1.0, 2.0, 3.0, 3.0, 2.0, 1.0]);
    // level 1 equilibrium near n = 10: 2 sides x (4.5 + 0.28 n + 0.17 n) ~ 18 events/s
    let mut levels = vec![level(
        1,
        6.0,
        vec![table(1, Variant::Qr, 6.0, plain_keys(), reactive_rates(4.5, 0.28, 0.17, 60))],
        sizes.clone(),
        queue.clone(),
    )];
    for k in 2..=5 {
        let l = 3.0 / k as f64;
        levels.push(level(
            k,
            6.0,
            vec![table(k, Variant::Qr, 6.0, plain_keys(), reactive_rates(l, l / 10.0, 0.0, 60))],
            sizes.clone(),
            queue.clone(),
        ));
    }
    model(ModelVariant::Qr, 0.7, levels)
}

pub const SAQR_SIZES: [u64; 8] = [1, 2, 3, 4, 5, 6, 8, 10];
pub const SAQR_WEIGHTS: [f64; 8] = [30.0, 18.0, 12.0, 10.0, 9.0, 8.0, 7.0, 6.0];

/// Size-aware ground truth: each (type, size) key carries its share of the
/// type's queue-reactive rate. AES 1 so buckets are lots.
pub fn saqr_truth() -> Model {
    let total_w: f64 = SAQR_WEIGHTS.iter().sum();
    let mut keys = Vec::new();
    for eta in EventType::BASE {
        for &s in &SAQR_SIZES {
            keys.push(RateKey::sized(eta, s));
        }
    }
    let mk = |lvl: usize, l: f64, c: f64, m: f64| {
        let rates: Vec<Vec<f64>> = (0..=60u64)
            .map(|n| {
                let base = [l, c * n as f64 / 3.0, m * n as f64 / 3.0];
                let mut r = Vec::new();
                for b in base {
                    for w in SAQR_WEIGHTS {
                        r.push(b * w / total_w);
                    }
                }
                r
            })
            .collect();
        table(lvl, Variant::Saqr, 1.0, keys.clone(), rates)
    };
    let queue = dist(&[5, 10, 15, 20, 30, 40], &[1.0, 2.0, 3.0, 3.0, 2.0, 1.0]);
    let sizes = LevelSizes::default();
    model(
        ModelVariant::Saqr,
        0.6,
        vec![
            level(1, 1.0, vec![mk(1, 1.2, 0.09, 0.05)], sizes.clone(), queue.clone()),
            level(2, 1.0, vec![mk(2, 0.9, 0.08, 0.0)], sizes, queue),
        ],
    )
}

/// Renders a log as raw CSV: a full snapshot after every timestamp plus a
/// trade row for each market order.
pub fn raw_csv(log: &EventLog) -> String {
    let tick = log.tick_size();
    let mut s = String::from("ts_ns,kind,side,level,price,size\n");
    let snapshot = |s: &mut String, ts: i64, book: &LobState| {
        for side in Side::BOTH {
            for lvl in 1..=book.depth() {
                let price = book.level_price_half_ticks(side, lvl) / 2;
                let q = book.queue(side, lvl).unwrap();
                let _ = writeln!(s, "{ts},book,{side},{lvl},{:.2},{q}", price as f64 * tick);
            }
        }
    };
    snapshot(&mut s, log.start_ns, &log.initial);
    let mut book = log.initial.clone();
    let mut last_ts = None;
    let mut pending_trades: Vec<String> = Vec::new();
    let mut states: Vec<(i64, LobState, Vec<String>)> = Vec::new();
    for rec in &log.records {
        let ts = rec.item.ts_ns();
        if last_ts.is_some_and(|t| t != ts) {
            states.push((last_ts.unwrap(), book.clone(), std::mem::take(&mut pending_trades)));
        }
        last_ts = Some(ts);
        match &rec.item {
            FlowItem::Order(ev) => {
                if ev.eta.base() == EventType::Market {
                    let price = book.level_price_half_ticks(ev.side, ev.level) / 2;
                    pending_trades.push(format!("{ts},trade,{},1,{:.2},{}", ev.side, price as f64 * tick, ev.size));
                }
                book.apply(ev).unwrap();
            }
            FlowItem::Move { mv, .. } => book.shift_reference(mv.toward, mv.refill),
        }
    }
    if let Some(t) = last_ts {
        states.push((t, book.clone(), pending_trades));
    }
    for (ts, state, trades) in states {
        for t in trades {
            s.push_str(&t);
            s.push('\n');
        }
        snapshot(&mut s, ts, &state);
    }
    s
}
