//! Per-level intensity tables and their mergeable counters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::lob::{quantize_queue, OrderEvent};
use crate::types::{EventType, Side};

use super::CalibError;

/// Queue-reactive model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "QRU")]
    Qru,
    #[serde(rename = "QR")]
    Qr,
    #[serde(rename = "FTQR")]
    Ftqr,
    #[serde(rename = "SAQR")]
    Saqr,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Qru, Variant::Qr, Variant::Ftqr, Variant::Saqr];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Qru => "QRU",
            Variant::Qr => "QR",
            Variant::Ftqr => "FTQR",
            Variant::Saqr => "SAQR",
        }
    }
}

/// How SAQR event sizes are bucketed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeBucketing {
    /// `ceil(size / AES)`, unit-width buckets in AES units.
    #[default]
    Aes,
    /// One bucket per lot.
    RawLots,
}

impl SizeBucketing {
    pub fn bucket(self, size: u64, aes: f64) -> u64 {
        match self {
            SizeBucketing::Aes => ((size as f64 / aes).ceil() as u64).max(1),
            SizeBucketing::RawLots => size,
        }
    }

    /// Nominal lot size of a bucket, used when no within-bucket law exists.
    pub fn nominal_size(self, bucket: u64, aes: f64) -> u64 {
        match self {
            SizeBucketing::Aes => ((bucket as f64 * aes).round() as u64).max(1),
            SizeBucketing::RawLots => bucket.max(1),
        }
    }
}

/// Column of an intensity table: an event type, optionally refined by size
/// bucket (SAQR).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RateKey {
    pub eta: EventType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_bucket: Option<u64>,
}

impl RateKey {
    pub fn plain(eta: EventType) -> Self {
        RateKey { eta, size_bucket: None }
    }

    pub fn sized(eta: EventType, s: u64) -> Self {
        RateKey {
            eta,
            size_bucket: Some(s),
        }
    }
}

/// Label an event receives under a variant.
pub fn rate_key(variant: Variant, ev: &OrderEvent, aes: f64, bucketing: SizeBucketing) -> RateKey {
    match variant {
        Variant::Qru | Variant::Qr => RateKey::plain(ev.eta.base()),
        Variant::Ftqr => RateKey::plain(full_consumption_label(ev)),
        Variant::Saqr => RateKey::sized(ev.eta.base(), bucketing.bucket(ev.size, aes)),
    }
}

/// Relabels consuming events that take the whole queue as `C_ALL` / `M_ALL`.
pub fn full_consumption_label(ev: &OrderEvent) -> EventType {
    let base = ev.eta.base();
    if base.is_consuming() && ev.size == ev.q_before {
        match base {
            EventType::Cancel => EventType::CancelAll,
            _ => EventType::MarketAll,
        }
    } else {
        base
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum BucketStatus {
    Populated,
    /// Fewer than `min_obs` observations; rates copied from bucket `from`.
    Filled { from: u64 },
}

/// Raw counters of one queue bucket. Merging is exact integer addition, so
/// folds over segments in any grouping give identical tables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounter {
    pub observations: u64,
    pub dt_sum_ns: u64,
    pub counts: BTreeMap<RateKey, u64>,
}

impl BucketCounter {
    pub fn merge(&mut self, other: &BucketCounter) {
        self.observations += other.observations;
        self.dt_sum_ns += other.dt_sum_ns;
        for (k, c) in &other.counts {
            *self.counts.entry(*k).or_insert(0) += c;
        }
    }
}

/// Mergeable accumulator for one (level, side selection, variant).
#[derive(Debug, Clone, PartialEq)]
pub struct TableCounter {
    pub level: usize,
    pub variant: Variant,
    pub side: Option<Side>,
    pub aes: f64,
    pub n_max: u64,
    pub bucketing: SizeBucketing,
    pub buckets: Vec<BucketCounter>,
}

impl TableCounter {
    pub fn new(
        level: usize,
        variant: Variant,
        side: Option<Side>,
        aes: f64,
        n_max: u64,
        bucketing: SizeBucketing,
    ) -> Result<Self, CalibError> {
        quantize_queue(1, aes)?;
        Ok(TableCounter {
            level,
            variant,
            side,
            aes,
            n_max,
            bucketing,
            buckets: vec![BucketCounter::default(); n_max as usize + 1],
        })
    }

    /// Whether the counter takes events from this queue.
    pub fn accepts(&self, ev: &OrderEvent) -> bool {
        ev.level == self.level && self.side.is_none_or(|s| s == ev.side)
    }

    /// Counts one event (the caller has already excluded first-of-segment events).
    pub fn add(&mut self, ev: &OrderEvent) {
        let n = quantize_queue(ev.q_before, self.aes).expect("aes validated").min(self.n_max);
        let b = &mut self.buckets[n as usize];
        b.observations += 1;
        b.dt_sum_ns += ev.dt_ns;
        let key = rate_key(self.variant, ev, self.aes, self.bucketing);
        *b.counts.entry(key).or_insert(0) += 1;
    }

    pub fn merge(&mut self, other: &TableCounter) {
        debug_assert_eq!(self.buckets.len(), other.buckets.len());
        for (a, b) in self.buckets.iter_mut().zip(&other.buckets) {
            a.merge(b);
        }
    }

    pub fn total_observations(&self) -> u64 {
        self.buckets.iter().map(|b| b.observations).sum()
    }

    /// Closed-form estimates: `Λ(n) = N(n) / Σdt`, `λ^k(n) = Λ(n) c_k(n) / N(n)`.
    /// Buckets with fewer than `min_obs` observations take the rates of the
    /// nearest bucket that has enough (the lower one on ties).
    pub fn finish(&self, min_obs: u64) -> Result<IntensityTable, CalibError> {
        let min_obs = min_obs.max(1);
        let mut keys: Vec<RateKey> = self
            .buckets
            .iter()
            .flat_map(|b| b.counts.keys().copied())
            .collect();
        keys.sort();
        keys.dedup();
        let populated: Vec<usize> = self
            .buckets
            .iter()
            .enumerate()
            .filter(|(_, b)| b.observations >= min_obs && b.dt_sum_ns > 0)
            .map(|(i, _)| i)
            .collect();
        if populated.is_empty() {
            return Err(CalibError::NoPopulatedBucket {
                level: self.level,
                min_obs,
            });
        }
        let raw: Vec<(f64, Vec<f64>)> = self
            .buckets
            .iter()
            .map(|b| {
                if b.observations == 0 || b.dt_sum_ns == 0 {
                    return (0.0, vec![0.0; keys.len()]);
                }
                let total = b.observations as f64 / (b.dt_sum_ns as f64 * 1e-9);
                let rates = keys
                    .iter()
                    .map(|k| total * *b.counts.get(k).unwrap_or(&0) as f64 / b.observations as f64)
                    .collect();
                (total, rates)
            })
            .collect();
        let buckets = self
            .buckets
            .iter()
            .enumerate()
            .map(|(n, b)| {
                let (status, src) = if populated.binary_search(&n).is_ok() {
                    (BucketStatus::Populated, n)
                } else {
                    let from = *populated
                        .iter()
                        .min_by_key(|&&p| (p.abs_diff(n), p))
                        .expect("non-empty");
                    (BucketStatus::Filled { from: from as u64 }, from)
                };
                BucketRates {
                    n: n as u64,
                    observations: b.observations,
                    dt_sum_ns: b.dt_sum_ns,
                    counts: keys.iter().map(|k| *b.counts.get(k).unwrap_or(&0)).collect(),
                    total: raw[src].0,
                    rates: raw[src].1.clone(),
                    status,
                }
            })
            .collect();
        Ok(IntensityTable {
            level: self.level,
            variant: self.variant,
            side: self.side,
            aes: self.aes,
            n_max: self.n_max,
            min_obs,
            bucketing: self.bucketing,
            keys,
            buckets,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRates {
    pub n: u64,
    pub observations: u64,
    pub dt_sum_ns: u64,
    /// Own event counts per key (never copied from a donor bucket).
    pub counts: Vec<u64>,
    /// `Λ(n)`, events per second.
    pub total: f64,
    /// Per-key rates, aligned with [`IntensityTable::keys`].
    pub rates: Vec<f64>,
    #[serde(flatten)]
    pub status: BucketStatus,
}

/// Estimated intensities for one level (and one side, or both pooled).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityTable {
    pub level: usize,
    pub variant: Variant,
    /// `None` when bid and ask events were pooled.
    pub side: Option<Side>,
    pub aes: f64,
    pub n_max: u64,
    pub min_obs: u64,
    pub bucketing: SizeBucketing,
    pub keys: Vec<RateKey>,
    /// Indexed by bucket, `0..=n_max`.
    pub buckets: Vec<BucketRates>,
}

impl IntensityTable {
    /// Builds a table directly from rates, bypassing estimation. `rates[n]`
    /// holds the per-key rates of bucket `n`.
    pub fn from_rates(
        level: usize,
        variant: Variant,
        aes: f64,
        keys: Vec<RateKey>,
        rates: Vec<Vec<f64>>,
    ) -> Result<Self, CalibError> {
        quantize_queue(1, aes)?;
        if rates.is_empty() {
            return Err(CalibError::Invalid("table needs at least one bucket".into()));
        }
        let mut buckets = Vec::with_capacity(rates.len());
        for (n, r) in rates.into_iter().enumerate() {
            if r.len() != keys.len() {
                return Err(CalibError::Invalid(format!(
                    "bucket {n} has {} rates for {} keys",
                    r.len(),
                    keys.len()
                )));
            }
            if r.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(CalibError::Invalid(format!("bucket {n} has a negative or non-finite rate")));
            }
            buckets.push(BucketRates {
                n: n as u64,
                observations: 0,
                dt_sum_ns: 0,
                counts: vec![0; keys.len()],
                total: r.iter().sum(),
                rates: r,
                status: BucketStatus::Populated,
            });
        }
        Ok(IntensityTable {
            level,
            variant,
            side: None,
            aes,
            n_max: buckets.len() as u64 - 1,
            min_obs: 0,
            bucketing: SizeBucketing::Aes,
            keys,
            buckets,
        })
    }

    /// Bucket of a queue size, capped at `n_max`.
    pub fn bucket_of(&self, q: u64) -> u64 {
        quantize_queue(q, self.aes).expect("validated aes").min(self.n_max)
    }

    pub fn bucket(&self, n: u64) -> &BucketRates {
        &self.buckets[n.min(self.n_max) as usize]
    }

    pub fn key_index(&self, key: &RateKey) -> Option<usize> {
        self.keys.iter().position(|k| k == key)
    }

    pub fn rate(&self, n: u64, key: &RateKey) -> f64 {
        self.key_index(key).map_or(0.0, |i| self.bucket(n).rates[i])
    }

    pub fn total(&self, n: u64) -> f64 {
        self.bucket(n).total
    }

    /// Sum of the rates of every key carrying `eta`.
    pub fn eta_rate(&self, n: u64, eta: EventType) -> f64 {
        let b = self.bucket(n);
        self.keys
            .iter()
            .zip(&b.rates)
            .filter(|(k, _)| k.eta == eta)
            .map(|(_, r)| r)
            .sum()
    }

    /// Sum of the own counts of every key carrying `eta`.
    pub fn eta_count(&self, n: u64, eta: EventType) -> u64 {
        let b = self.bucket(n);
        self.keys
            .iter()
            .zip(&b.counts)
            .filter(|(k, _)| k.eta == eta)
            .map(|(_, c)| c)
            .sum()
    }

    /// Rate of all keys whose type folds onto `base`, computed from the
    /// merged counts as `Λ(n) Σc / N(n)`. For populated buckets this is
    /// bitwise equal to the same quantity in any table estimated from the
    /// same events, whatever its key refinement.
    pub fn base_rate(&self, n: u64, base: EventType) -> f64 {
        let b = self.bucket(n);
        let src = match b.status {
            BucketStatus::Populated => b,
            BucketStatus::Filled { from } => self.bucket(from),
        };
        if src.observations == 0 {
            // table built from rates: no counts to merge
            return self
                .keys
                .iter()
                .zip(&src.rates)
                .filter(|(k, _)| k.eta.base() == base)
                .map(|(_, r)| r)
                .sum();
        }
        let c: u64 = self
            .keys
            .iter()
            .zip(&src.counts)
            .filter(|(k, _)| k.eta.base() == base)
            .map(|(_, c)| c)
            .sum();
        src.total * c as f64 / src.observations as f64
    }

    pub fn event_types(&self) -> Vec<EventType> {
        let mut e: Vec<EventType> = self.keys.iter().map(|k| k.eta).collect();
        e.sort();
        e.dedup();
        e
    }

    /// Largest relative gap between `Λ(n)` and the sum of the per-key rates.
    pub fn total_consistency(&self) -> f64 {
        self.buckets
            .iter()
            .filter(|b| b.total > 0.0)
            .map(|b| (b.rates.iter().sum::<f64>() - b.total).abs() / b.total)
            .fold(0.0, f64::max)
    }

    pub fn populated(&self) -> impl Iterator<Item = &BucketRates> + '_ {
        self.buckets.iter().filter(|b| b.status == BucketStatus::Populated)
    }
}
