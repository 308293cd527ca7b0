//! Aggregated-volume limit order book.
//!
//! The book is `2K` queues indexed by their distance to the reference price:
//! level `i` on the ask side sits at `ref + (i - 1/2)` ticks, level `i` on the
//! bid side at `ref - (i - 1/2)` ticks. Prices are kept in half-tick integers
//! so the reference price is always exactly representable.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::SizeDistribution;
use crate::types::{EventType, Side};

#[derive(Debug, Error, PartialEq)]
pub enum LobError {
    #[error("depth must be at least 1")]
    ZeroDepth,
    #[error("bid and ask sides have different depths ({0} vs {1})")]
    DepthMismatch(usize, usize),
    #[error("tick size must be positive and finite, got {0}")]
    BadTick(f64),
    #[error("level {level} outside 1..={depth}")]
    LevelOutOfRange { level: usize, depth: usize },
    #[error("event size must be at least one lot")]
    ZeroSize,
    #[error("{eta} of size {size} exceeds queue {queue} at {side} level {level}")]
    Overconsumption {
        eta: EventType,
        side: Side,
        level: usize,
        size: u64,
        queue: u64,
    },
    #[error("{eta} of size {size} must match the full queue {queue}")]
    PartialFullConsumption { eta: EventType, size: u64, queue: u64 },
    #[error("market orders are only accepted at level 1 (got level {0})")]
    MarketBeyondBest(usize),
    #[error("theta must lie in [0, 1], got {0}")]
    BadTheta(f64),
    #[error("refill distributions cover {have} levels, need {need}")]
    MissingRefill { have: usize, need: usize },
    #[error("average event size must be positive, got {0}")]
    BadAes(f64),
}

/// One order-flow event at a single queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderEvent {
    /// Event timestamp in nanoseconds.
    pub ts_ns: i64,
    pub eta: EventType,
    pub side: Side,
    /// 1-based distance to the reference price.
    pub level: usize,
    /// Lots; for full-consumption types this is the whole pre-event queue.
    pub size: u64,
    /// Nanoseconds since the previous event at the same queue, or since the
    /// last reset of the inter-arrival counters.
    pub dt_ns: u64,
    /// Queue size in lots just before the event.
    pub q_before: u64,
}

impl OrderEvent {
    pub fn dt_secs(&self) -> f64 {
        self.dt_ns as f64 * 1e-9
    }

    /// Quantized pre-event queue size.
    pub fn q_bucket(&self, aes: f64) -> Result<u64, LobError> {
        quantize_queue(self.q_before, aes)
    }

    /// Signed volume change this event applies to its queue.
    pub fn signed_size(&self) -> i64 {
        if self.eta.is_consuming() {
            -(self.size as i64)
        } else {
            self.size as i64
        }
    }
}

/// Probability of a reference-price move on best-queue depletion, plus the
/// queue-size laws used to populate newly exposed price levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefPricePolicy {
    pub theta: f64,
    /// One distribution per level (index 0 = level 1).
    pub refill: Vec<SizeDistribution>,
}

impl RefPricePolicy {
    pub fn new(theta: f64, refill: Vec<SizeDistribution>) -> Result<Self, LobError> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(LobError::BadTheta(theta));
        }
        Ok(RefPricePolicy { theta, refill })
    }

    pub fn check_depth(&self, depth: usize) -> Result<(), LobError> {
        if self.refill.len() < depth {
            return Err(LobError::MissingRefill {
                have: self.refill.len(),
                need: depth,
            });
        }
        Ok(())
    }
}

/// Outcome of a successful Bernoulli(theta) draw after a depletion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefMove {
    /// Side whose best queue was depleted; the reference price moved one
    /// tick toward it.
    pub toward: Side,
    /// Size drawn for the newly exposed deepest level on that side.
    pub refill: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LobState {
    pub tick_size: f64,
    /// Reference price in half ticks.
    pub ref_half_ticks: i64,
    pub bids: Vec<u64>,
    pub asks: Vec<u64>,
}

impl LobState {
    pub fn new(
        tick_size: f64,
        ref_half_ticks: i64,
        bids: Vec<u64>,
        asks: Vec<u64>,
    ) -> Result<Self, LobError> {
        if !(tick_size.is_finite() && tick_size > 0.0) {
            return Err(LobError::BadTick(tick_size));
        }
        if bids.len() != asks.len() {
            return Err(LobError::DepthMismatch(bids.len(), asks.len()));
        }
        if bids.is_empty() {
            return Err(LobError::ZeroDepth);
        }
        Ok(LobState {
            tick_size,
            ref_half_ticks,
            bids,
            asks,
        })
    }

    /// Book with every queue set to `size`.
    pub fn flat(tick_size: f64, ref_half_ticks: i64, depth: usize, size: u64) -> Result<Self, LobError> {
        Self::new(tick_size, ref_half_ticks, vec![size; depth], vec![size; depth])
    }

    pub fn depth(&self) -> usize {
        self.bids.len()
    }

    pub fn side(&self, side: Side) -> &[u64] {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }

    fn side_mut(&mut self, side: Side) -> &mut Vec<u64> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    /// Queue size at a 1-based level.
    pub fn queue(&self, side: Side, level: usize) -> Result<u64, LobError> {
        self.check_level(level)?;
        Ok(self.side(side)[level - 1])
    }

    fn check_level(&self, level: usize) -> Result<(), LobError> {
        if level == 0 || level > self.depth() {
            return Err(LobError::LevelOutOfRange {
                level,
                depth: self.depth(),
            });
        }
        Ok(())
    }

    /// 1-based index of the first non-empty level, if any.
    pub fn best_level(&self, side: Side) -> Option<usize> {
        self.side(side).iter().position(|&q| q > 0).map(|i| i + 1)
    }

    /// Price of a level in half ticks.
    pub fn level_price_half_ticks(&self, side: Side, level: usize) -> i64 {
        self.ref_half_ticks + side.sign() * (2 * level as i64 - 1)
    }

    /// Mid price in half ticks; falls back to the reference price when one
    /// side of the tracked band is empty.
    pub fn mid_half_ticks(&self) -> i64 {
        match (self.best_level(Side::Bid), self.best_level(Side::Ask)) {
            (Some(b), Some(a)) => self.ref_half_ticks + a as i64 - b as i64,
            _ => self.ref_half_ticks,
        }
    }

    /// Spread in ticks, when both sides have volume in the band.
    pub fn spread_ticks(&self) -> Option<u64> {
        match (self.best_level(Side::Bid), self.best_level(Side::Ask)) {
            (Some(b), Some(a)) => Some((a + b - 1) as u64),
            _ => None,
        }
    }

    pub fn ref_price(&self) -> f64 {
        self.ref_half_ticks as f64 * self.tick_size * 0.5
    }

    pub fn mid_price(&self) -> f64 {
        self.mid_half_ticks() as f64 * self.tick_size * 0.5
    }

    pub fn total_volume(&self) -> u64 {
        self.bids.iter().chain(&self.asks).sum()
    }

    /// Applies one event in place. Returns the depletion flag: true iff the
    /// event emptied the best queue of its side.
    pub fn apply(&mut self, ev: &OrderEvent) -> Result<bool, LobError> {
        self.check_level(ev.level)?;
        if ev.size == 0 {
            return Err(LobError::ZeroSize);
        }
        if ev.eta.is_market() && ev.level != 1 {
            return Err(LobError::MarketBeyondBest(ev.level));
        }
        let was_best = self.best_level(ev.side) == Some(ev.level);
        let queue = &mut self.side_mut(ev.side)[ev.level - 1];
        match ev.eta {
            EventType::Limit => {
                *queue += ev.size;
                return Ok(false);
            }
            EventType::Cancel | EventType::Market => {
                if ev.size > *queue {
                    return Err(LobError::Overconsumption {
                        eta: ev.eta,
                        side: ev.side,
                        level: ev.level,
                        size: ev.size,
                        queue: *queue,
                    });
                }
                *queue -= ev.size;
            }
            EventType::CancelAll | EventType::MarketAll => {
                if ev.size != *queue {
                    return Err(LobError::PartialFullConsumption {
                        eta: ev.eta,
                        size: ev.size,
                        queue: *queue,
                    });
                }
                *queue = 0;
            }
        }
        Ok(was_best && *queue == 0)
    }

    /// Value-semantics form of [`LobState::apply`].
    pub fn apply_event(&self, ev: &OrderEvent) -> Result<(LobState, bool), LobError> {
        let mut next = self.clone();
        let flag = next.apply(ev)?;
        Ok((next, flag))
    }

    /// Moves the reference price one tick toward `toward` and re-indexes every
    /// queue by its new distance to the reference.
    ///
    /// On the `toward` side every queue moves one level closer, the queue that
    /// was at level 1 leaves the book and level `K` receives `refill`. On the
    /// opposite side every queue moves one level deeper, level `K` is
    /// discarded and level 1 (the vacated price) starts empty.
    pub fn shift_reference(&mut self, toward: Side, refill: u64) {
        self.ref_half_ticks += 2 * toward.sign();
        let near = self.side_mut(toward);
        near.remove(0);
        near.push(refill);
        let far = self.side_mut(toward.opposite());
        far.pop();
        far.insert(0, 0);
    }

    /// Bernoulli(theta) reference-price transition after the best queue of
    /// `side_depleted` emptied. Returns the move when one happens.
    pub fn transition<R: Rng + ?Sized>(
        &mut self,
        policy: &RefPricePolicy,
        side_depleted: Side,
        rng: &mut R,
    ) -> Option<RefMove> {
        let u: f64 = rng.random();
        if u >= policy.theta {
            return None;
        }
        let deepest = self.depth();
        let refill = policy
            .refill
            .get(deepest - 1)
            .or_else(|| policy.refill.last())
            .map(|d| d.sample(rng))
            .unwrap_or(1)
            .max(1);
        self.shift_reference(side_depleted, refill);
        Some(RefMove {
            toward: side_depleted,
            refill,
        })
    }
}

/// Value-semantics form of [`LobState::transition`].
pub fn transition_ref_price<R: Rng + ?Sized>(
    state: &LobState,
    policy: &RefPricePolicy,
    side_depleted: Side,
    rng: &mut R,
) -> LobState {
    let mut next = state.clone();
    next.transition(policy, side_depleted, rng);
    next
}

/// Queue size in average-event-size units, `ceil(q / aes)`.
pub fn quantize_queue(q: u64, aes: f64) -> Result<u64, LobError> {
    if !(aes.is_finite() && aes > 0.0) {
        return Err(LobError::BadAes(aes));
    }
    if q == 0 {
        return Ok(0);
    }
    Ok((q as f64 / aes).ceil() as u64)
}
