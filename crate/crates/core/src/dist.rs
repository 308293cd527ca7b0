//! Empirical discrete distributions over positive lot sizes.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("distribution has no mass")]
    Empty,
    #[error("support must be strictly positive and increasing (offending value {0})")]
    BadSupport(u64),
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("support and probability vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("negative or non-finite probability {0}")]
    BadProbability(f64),
}

/// What a size distribution was conditioned on when it was estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "bucket")]
pub enum Conditioning {
    Stationary,
    /// Conditional on the quantized queue size being equal to the bucket.
    QueueBucket(u64),
}

#[derive(Serialize, Deserialize)]
struct RawDistribution {
    support: Vec<u64>,
    probs: Vec<f64>,
    conditioning: Conditioning,
}

/// Discrete distribution over strictly positive sizes, sampled by inverse CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct SizeDistribution {
    support: Vec<u64>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
    conditioning: Conditioning,
}

impl TryFrom<RawDistribution> for SizeDistribution {
    type Error = DistError;

    fn try_from(raw: RawDistribution) -> Result<Self, Self::Error> {
        SizeDistribution::new(raw.support, raw.probs, raw.conditioning)
    }
}

impl From<SizeDistribution> for RawDistribution {
    fn from(d: SizeDistribution) -> Self {
        RawDistribution {
            support: d.support,
            probs: d.probs,
            conditioning: d.conditioning,
        }
    }
}

impl SizeDistribution {
    pub fn new(
        support: Vec<u64>,
        probs: Vec<f64>,
        conditioning: Conditioning,
    ) -> Result<Self, DistError> {
        if support.len() != probs.len() {
            return Err(DistError::LengthMismatch(support.len(), probs.len()));
        }
        if support.is_empty() {
            return Err(DistError::Empty);
        }
        let mut prev = 0u64;
        for &s in &support {
            if s <= prev {
                return Err(DistError::BadSupport(s));
            }
            prev = s;
        }
        for &p in &probs {
            if !p.is_finite() || p < 0.0 {
                return Err(DistError::BadProbability(p));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(DistError::NotNormalized(total));
        }
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        Ok(SizeDistribution {
            support,
            probs,
            cumulative,
            conditioning,
        })
    }

    /// Builds the empirical distribution of `sizes`; zero sizes are ignored.
    pub fn from_sizes<I>(sizes: I, conditioning: Conditioning) -> Result<Self, DistError>
    where
        I: IntoIterator<Item = u64>,
    {
        let mut sorted: Vec<u64> = sizes.into_iter().filter(|&s| s > 0).collect();
        if sorted.is_empty() {
            return Err(DistError::Empty);
        }
        sorted.sort_unstable();
        let mut counts: Vec<(u64, u64)> = Vec::new();
        for s in sorted {
            match counts.last_mut() {
                Some((v, c)) if *v == s => *c += 1,
                _ => counts.push((s, 1)),
            }
        }
        Self::from_counts(&counts, conditioning)
    }

    /// Builds a distribution from `(size, count)` pairs sorted by size.
    pub fn from_counts(counts: &[(u64, u64)], conditioning: Conditioning) -> Result<Self, DistError> {
        let total: u64 = counts.iter().map(|&(_, c)| c).sum();
        if total == 0 {
            return Err(DistError::Empty);
        }
        let support: Vec<u64> = counts.iter().filter(|c| c.1 > 0).map(|&(s, _)| s).collect();
        let mut probs: Vec<f64> = counts
            .iter()
            .filter(|c| c.1 > 0)
            .map(|&(_, c)| c as f64 / total as f64)
            .collect();
        renormalize(&mut probs);
        Self::new(support, probs, conditioning)
    }

    /// Point mass at `size`.
    pub fn degenerate(size: u64) -> Result<Self, DistError> {
        Self::new(vec![size], vec![1.0], Conditioning::Stationary)
    }

    pub fn support(&self) -> &[u64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn conditioning(&self) -> Conditioning {
        self.conditioning
    }

    pub fn mean(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(&s, &p)| s as f64 * p)
            .sum()
    }

    /// P(X = size).
    pub fn prob_of(&self, size: u64) -> f64 {
        match self.support.binary_search(&size) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }

    /// P(X <= size).
    pub fn cdf(&self, size: u64) -> f64 {
        match self.support.binary_search(&size) {
            Ok(i) => self.cumulative[i],
            Err(0) => 0.0,
            Err(i) => self.cumulative[i - 1],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.support[idx.min(self.support.len() - 1)]
    }

    /// Draw conditioned on `X <= max`, without building the restricted law.
    /// `None` when no support point is at most `max`.
    pub fn sample_at_most<R: Rng + ?Sized>(&self, max: u64, rng: &mut R) -> Option<u64> {
        let mass = self.cdf(max);
        if mass <= 0.0 {
            return None;
        }
        let u: f64 = rng.random::<f64>() * mass;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        let hi = self.support.partition_point(|&s| s <= max);
        Some(self.support[idx.min(hi - 1)])
    }

    /// Restriction to sizes in `(lo, hi]`, renormalized.
    pub fn restricted(&self, lo: u64, hi: u64) -> Result<Self, DistError> {
        let counts: Vec<(u64, f64)> = self
            .support
            .iter()
            .zip(&self.probs)
            .filter(|(&s, _)| s > lo && s <= hi)
            .map(|(&s, &p)| (s, p))
            .collect();
        let total: f64 = counts.iter().map(|c| c.1).sum();
        if counts.is_empty() || total <= 0.0 {
            return Err(DistError::Empty);
        }
        let mut probs: Vec<f64> = counts.iter().map(|c| c.1 / total).collect();
        renormalize(&mut probs);
        Self::new(counts.iter().map(|c| c.0).collect(), probs, self.conditioning)
    }
}

/// Pushes the rounding residue of a probability vector onto its largest entry
/// so the sum is 1 to within one ulp.
fn renormalize(probs: &mut [f64]) {
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return;
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
    let residue = 1.0 - probs.iter().sum::<f64>();
    if let Some(max) = probs
        .iter_mut()
        .max_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
    {
        *max += residue;
    }
}
