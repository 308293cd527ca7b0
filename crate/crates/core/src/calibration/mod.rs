//! Closed-form estimation of queue-reactive intensities, order-size laws,
//! the reference-price parameter theta and a split-sample stability check.
//!
//! Every estimator consumes [`FlowSegment`]s. The first event of each
//! segment is excluded from rate estimation because its `dt` is measured
//! from the reset rather than from an observed event.

mod table;
pub mod theta;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{Conditioning, DistError, SizeDistribution};
use crate::flow::{level_stats, FlowSegment};
use crate::lob::{quantize_queue, LobError, OrderEvent};
use crate::types::{EventType, Side};

pub use table::{
    full_consumption_label, rate_key, BucketCounter, BucketRates, BucketStatus, IntensityTable, RateKey,
    SizeBucketing, TableCounter, Variant,
};
pub use theta::{
    calibrate_theta, continuation_counts, moves_from_mid_path, DepletionPairs, MoveCounts, MoveMechanism, ThetaFit,
};

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("level {level}: no bucket has at least {min_obs} observations")]
    NoPopulatedBucket { level: usize, min_obs: u64 },
    #[error("level {0}: no events to estimate the average event size")]
    NoEvents(usize),
    #[error("no events match the size filter ({0})")]
    EmptyFilter(String),
    #[error("need at least {need} {what}, got {got}")]
    TooFew { what: &'static str, need: usize, got: usize },
    #[error("theta search did not converge after {iterations} iterations (bracket [{lo}, {hi}])")]
    ThetaNoConvergence { iterations: usize, lo: f64, hi: f64 },
    #[error("invalid table: {0}")]
    Invalid(String),
    #[error(transparent)]
    Lob(#[from] LobError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Bucket cap in AES units; larger queues pool into `n_max`.
    pub n_max: u64,
    /// Buckets below this many observations are filled from a neighbour.
    pub min_obs: u64,
    /// Keep bid and ask separate instead of pooling them.
    pub separate_sides: bool,
    pub size_bucketing: SizeBucketing,
    /// Use this AES instead of the empirical one.
    pub aes_override: Option<f64>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            n_max: 60,
            min_obs: 50,
            separate_sides: false,
            size_bucketing: SizeBucketing::Aes,
            aes_override: None,
        }
    }
}

/// Every event at `level` across the segments, first-of-segment included.
pub fn level_events<'a>(segments: &'a [FlowSegment], level: usize) -> impl Iterator<Item = &'a OrderEvent> + 'a {
    segments
        .iter()
        .flat_map(|s| s.events.iter())
        .filter(move |e| e.level == level)
}

/// Average event size of a level over all types and sides.
pub fn level_aes(segments: &[FlowSegment], level: usize) -> Result<f64, CalibError> {
    level_stats(level_events(segments, level), level)
        .aes
        .ok_or(CalibError::NoEvents(level))
}

/// Counts events into a [`TableCounter`], folding segments in parallel.
pub fn count_segments(
    segments: &[FlowSegment],
    level: usize,
    variant: Variant,
    side: Option<Side>,
    aes: f64,
    opts: &EstimateOptions,
) -> Result<TableCounter, CalibError> {
    let empty = TableCounter::new(level, variant, side, aes, opts.n_max, opts.size_bucketing)?;
    let counter = segments
        .par_iter()
        .fold(
            || empty.clone(),
            |mut acc, seg| {
                for ev in seg.events.iter().skip(1) {
                    if acc.accepts(ev) {
                        acc.add(ev);
                    }
                }
                acc
            },
        )
        .reduce(
            || empty.clone(),
            |mut a, b| {
                a.merge(&b);
                a
            },
        );
    Ok(counter)
}

/// Estimates the tables of one level: one pooled table, or bid then ask when
/// `opts.separate_sides` is set.
pub fn estimate(
    segments: &[FlowSegment],
    level: usize,
    variant: Variant,
    opts: &EstimateOptions,
) -> Result<Vec<IntensityTable>, CalibError> {
    let aes = match opts.aes_override {
        Some(a) => a,
        None => level_aes(segments, level)?,
    };
    let sides: Vec<Option<Side>> = if opts.separate_sides {
        Side::BOTH.iter().map(|&s| Some(s)).collect()
    } else {
        vec![None]
    };
    sides
        .into_iter()
        .map(|side| count_segments(segments, level, variant, side, aes, opts)?.finish(opts.min_obs))
        .collect()
}

fn pooled(
    segments: &[FlowSegment],
    level: usize,
    variant: Variant,
    opts: &EstimateOptions,
) -> Result<IntensityTable, CalibError> {
    let opts = EstimateOptions {
        separate_sides: false,
        ..*opts
    };
    Ok(estimate(segments, level, variant, &opts)?.remove(0))
}

pub fn estimate_qr(segments: &[FlowSegment], level: usize, opts: &EstimateOptions) -> Result<IntensityTable, CalibError> {
    pooled(segments, level, Variant::Qr, opts)
}

pub fn estimate_ftqr(segments: &[FlowSegment], level: usize, opts: &EstimateOptions) -> Result<IntensityTable, CalibError> {
    pooled(segments, level, Variant::Ftqr, opts)
}

pub fn estimate_saqr(segments: &[FlowSegment], level: usize, opts: &EstimateOptions) -> Result<IntensityTable, CalibError> {
    pooled(segments, level, Variant::Saqr, opts)
}

/// Which events feed a size distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeFilter {
    /// Base type, full consumptions included.
    Base(EventType),
    /// Consuming events that took the whole queue (`C_ALL` / `M_ALL`).
    Full(EventType),
    /// Consuming events that left volume behind.
    Partial(EventType),
}

impl SizeFilter {
    pub fn matches(self, ev: &OrderEvent) -> bool {
        match self {
            SizeFilter::Base(eta) => ev.eta.base() == eta.base(),
            SizeFilter::Full(eta) => ev.eta.base() == eta.base() && full_consumption_label(ev) != ev.eta.base(),
            SizeFilter::Partial(eta) => ev.eta.base() == eta.base() && full_consumption_label(ev) == ev.eta.base(),
        }
    }
}

/// Empirical size law of `eta` events at `level`. Full-consumption types
/// select only the events that emptied their queue; conditional laws keep
/// events whose quantized pre-event queue equals the bucket.
pub fn size_distribution<'a, I>(
    events: I,
    level: usize,
    eta: EventType,
    conditioning: Conditioning,
    aes: f64,
) -> Result<SizeDistribution, CalibError>
where
    I: IntoIterator<Item = &'a OrderEvent>,
{
    let filter = if eta == eta.base() {
        SizeFilter::Base(eta)
    } else {
        SizeFilter::Full(eta)
    };
    filtered_sizes(events, level, filter, conditioning, aes)
}

pub fn filtered_sizes<'a, I>(
    events: I,
    level: usize,
    filter: SizeFilter,
    conditioning: Conditioning,
    aes: f64,
) -> Result<SizeDistribution, CalibError>
where
    I: IntoIterator<Item = &'a OrderEvent>,
{
    quantize_queue(1, aes)?;
    let mut sizes = Vec::new();
    for ev in events {
        if ev.level != level || !filter.matches(ev) {
            continue;
        }
        if let Conditioning::QueueBucket(n) = conditioning {
            if quantize_queue(ev.q_before, aes)? != n {
                continue;
            }
        }
        sizes.push(ev.size);
    }
    SizeDistribution::from_sizes(sizes, conditioning)
        .map_err(|_| CalibError::EmptyFilter(format!("level {level}, {filter:?}, {conditioning:?}")))
}

/// Queue-reactive log-likelihood of the events of one table's queue(s):
/// `Σ_k [log λ^{key_k}(n_k) - Λ(n_k) Δt_k]`, first-of-segment events excluded.
/// `Λ` is recomputed as the sum of the per-key rates so perturbed tables
/// stay self-consistent.
pub fn log_likelihood(table: &IntensityTable, segments: &[FlowSegment]) -> f64 {
    let mut ll = 0.0;
    for seg in segments {
        for ev in seg.events.iter().skip(1) {
            if ev.level != table.level || table.side.is_some_and(|s| s != ev.side) {
                continue;
            }
            let n = table.bucket_of(ev.q_before);
            let b = table.bucket(n);
            let key = rate_key(table.variant, ev, table.aes, table.bucketing);
            let lam = table.key_index(&key).map_or(0.0, |i| b.rates[i]);
            let total: f64 = b.rates.iter().sum();
            ll += lam.ln() - total * ev.dt_secs();
        }
    }
    ll
}

/// Two chronological half-sample calibrations and their largest relative
/// rate divergence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySplit {
    pub first: IntensityTable,
    pub second: IntensityTable,
    /// `max |r2 - r1| / r1` over (bucket, key) cells where both halves saw
    /// at least `min_obs` events of that key, and over the bucket totals of
    /// buckets populated in both halves.
    pub max_divergence: f64,
    /// Cells entering the maximum.
    pub compared: usize,
}

/// Splits the days (each a list of segments) into two chronological halves
/// and calibrates each. Odd day counts give the extra day to the second half.
pub fn stability_split(
    days: &[Vec<FlowSegment>],
    level: usize,
    variant: Variant,
    opts: &EstimateOptions,
) -> Result<StabilitySplit, CalibError> {
    if days.len() < 2 {
        return Err(CalibError::TooFew {
            what: "days",
            need: 2,
            got: days.len(),
        });
    }
    let half = days.len() / 2;
    let flat = |d: &[Vec<FlowSegment>]| d.iter().flatten().cloned().collect::<Vec<_>>();
    let (a, b) = (flat(&days[..half]), flat(&days[half..]));
    // both halves share one AES so their buckets line up
    let aes = match opts.aes_override {
        Some(x) => x,
        None => level_aes(&flat(days), level)?,
    };
    let opts = EstimateOptions {
        aes_override: Some(aes),
        ..*opts
    };
    let first = pooled(&a, level, variant, &opts)?;
    let second = pooled(&b, level, variant, &opts)?;
    let (max_divergence, compared) = divergence(&first, &second, opts.min_obs.max(1));
    Ok(StabilitySplit {
        first,
        second,
        max_divergence,
        compared,
    })
}

fn divergence(a: &IntensityTable, b: &IntensityTable, min_obs: u64) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut compared = 0;
    for (ba, bb) in a.buckets.iter().zip(&b.buckets) {
        if ba.status != BucketStatus::Populated || bb.status != BucketStatus::Populated {
            continue;
        }
        if ba.total > 0.0 {
            worst = worst.max((bb.total - ba.total).abs() / ba.total);
            compared += 1;
        }
        for (i, key) in a.keys.iter().enumerate() {
            let Some(j) = b.key_index(key) else { continue };
            if ba.counts[i] < min_obs || bb.counts[j] < min_obs {
                continue;
            }
            let (r1, r2) = (ba.rates[i], bb.rates[j]);
            if r1 > 0.0 {
                worst = worst.max((r2 - r1).abs() / r1);
                compared += 1;
            }
        }
    }
    (worst, compared)
}
