//! Calibration of theta against the continuation fraction of mid-price moves.
//!
//! A move sequence is a list of signs (+1 up, -1 down), one entry per
//! half-tick change of the mid price. Its continuation fraction is the share
//! of consecutive pairs with equal signs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CalibError;

/// Model of how theta shapes the continuation fraction.
pub trait MoveMechanism {
    /// Continuation fraction produced at `theta`. Must be non-decreasing in
    /// `theta` for a fixed mechanism instance.
    fn continuation_fraction(&self, theta: f64) -> f64;
}

/// Depletion episodes on a large-tick book. Each episode empties the best
/// queue of a uniformly drawn side `S`, moving the mid half a tick toward
/// `S`. With probability theta the reference follows (a second half tick
/// toward `S`); otherwise the emptied level refills and the mid comes back.
///
/// The expected fraction is `theta / 2 + 1/4`. Simulated with common random
/// numbers across theta so the result is monotone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepletionPairs {
    pub episodes: usize,
    pub seed: u64,
}

impl Default for DepletionPairs {
    fn default() -> Self {
        DepletionPairs {
            episodes: 200_000,
            seed: 0x7e7a,
        }
    }
}

impl DepletionPairs {
    /// Move path of `episodes` depletions under `theta`.
    pub fn generate<R: Rng + ?Sized>(episodes: usize, theta: f64, rng: &mut R) -> Vec<i8> {
        let mut moves = Vec::with_capacity(2 * episodes);
        for _ in 0..episodes {
            let s: i8 = if rng.random::<bool>() { 1 } else { -1 };
            let follow = rng.random::<f64>() < theta;
            moves.push(s);
            moves.push(if follow { s } else { -s });
        }
        moves
    }
}

impl MoveMechanism for DepletionPairs {
    fn continuation_fraction(&self, theta: f64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        continuation_counts(&Self::generate(self.episodes, theta, &mut rng)).fraction()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCounts {
    pub moves: usize,
    pub continuations: usize,
    pub alternations: usize,
}

impl MoveCounts {
    pub fn fraction(&self) -> f64 {
        let pairs = self.continuations + self.alternations;
        if pairs == 0 {
            0.0
        } else {
            self.continuations as f64 / pairs as f64
        }
    }
}

pub fn continuation_counts(moves: &[i8]) -> MoveCounts {
    let continuations = moves.windows(2).filter(|w| w[0] == w[1]).count();
    MoveCounts {
        moves: moves.len(),
        continuations,
        alternations: moves.len().saturating_sub(1) - continuations,
    }
}

/// Expands a mid-price path (half ticks) into unit moves.
pub fn moves_from_mid_path(mids: &[i64]) -> Vec<i8> {
    let mut out = Vec::new();
    for w in mids.windows(2) {
        let d = w[1] - w[0];
        let s: i8 = if d > 0 { 1 } else { -1 };
        out.extend(std::iter::repeat_n(s, d.unsigned_abs() as usize));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaFit {
    pub theta: f64,
    pub target_fraction: f64,
    pub achieved_fraction: f64,
    pub counts: MoveCounts,
    pub iterations: usize,
}

/// Bisection of theta on `[0, 1]` until the bracket is narrower than 1e-6.
/// Targets outside the mechanism's range give the nearest endpoint.
pub fn calibrate_theta(moves: &[i8], mechanism: &dyn MoveMechanism, max_iter: usize) -> Result<ThetaFit, CalibError> {
    if moves.len() < 2 {
        return Err(CalibError::TooFew {
            what: "price moves",
            need: 2,
            got: moves.len(),
        });
    }
    let counts = continuation_counts(moves);
    let target = counts.fraction();
    let fit = |theta: f64, achieved: f64, iterations: usize| ThetaFit {
        theta,
        target_fraction: target,
        achieved_fraction: achieved,
        counts,
        iterations,
    };
    let f_lo = mechanism.continuation_fraction(0.0);
    if target <= f_lo {
        return Ok(fit(0.0, f_lo, 0));
    }
    let f_hi = mechanism.continuation_fraction(1.0);
    if target >= f_hi {
        return Ok(fit(1.0, f_hi, 0));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for it in 1..=max_iter {
        let mid = 0.5 * (lo + hi);
        if mechanism.continuation_fraction(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-6 {
            let theta = 0.5 * (lo + hi);
            return Ok(fit(theta, mechanism.continuation_fraction(theta), it));
        }
    }
    Err(CalibError::ThetaNoConvergence {
        iterations: max_iter,
        lo,
        hi,
    })
}
