//! Stylized-fact metrics. Every function is pure.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;
use thiserror::Error;

use crate::eventlog::EventLog;
use crate::hawkes::{component_of, ORDER_FLOW_DIM};
use crate::stats::{self, linear_fit, LinearFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactError {
    #[error("empty sample")]
    Empty,
    #[error("need at least {need} {what}, got {got}")]
    TooShort { what: &'static str, need: usize, got: usize },
    #[error("{what} of {value} s is not a positive multiple of the {period} s sampling period")]
    NotMultiple { what: &'static str, value: f64, period: f64 },
    #[error("degenerate sample: {0}")]
    Degenerate(String),
    #[error("prices must be positive for log returns")]
    NonPositivePrice,
    #[error("{0}")]
    Log(String),
}

type Result<T> = std::result::Result<T, FactError>;

/// Uniformly sampled prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub period_s: f64,
    pub values: Vec<f64>,
}

impl PriceSeries {
    pub fn new(period_s: f64, values: Vec<f64>) -> Self {
        PriceSeries { period_s, values }
    }

    /// Number of sampling steps in `span_s`, which must be a whole multiple
    /// of the period.
    pub fn steps(&self, what: &'static str, span_s: f64) -> Result<usize> {
        let k = span_s / self.period_s;
        let r = k.round();
        if !(span_s > 0.0) || r < 1.0 || (k - r).abs() > 1e-9 * k.max(1.0) {
            return Err(FactError::NotMultiple {
                what,
                value: span_s,
                period: self.period_s,
            });
        }
        Ok(r as usize)
    }

    fn log_prices(&self) -> Result<Vec<f64>> {
        if self.values.iter().any(|&p| !(p > 0.0)) {
            return Err(FactError::NonPositivePrice);
        }
        Ok(self.values.iter().map(|p| p.ln()).collect())
    }
}

/// Trading seconds in a year: 252 days of 9 hours.
pub const TRADING_SECONDS_PER_YEAR: f64 = 252.0 * 9.0 * 3600.0;

/// Annualized volatility over consecutive non-overlapping windows: sample
/// standard deviation of the per-period log returns in the window, times
/// `sqrt(periods per year)`.
pub fn realized_volatility(series: &PriceSeries, window_s: f64, seconds_per_year: f64) -> Result<Vec<f64>> {
    let m = series.steps("volatility window", window_s)?;
    if m < 2 {
        return Err(FactError::TooShort {
            what: "returns per volatility window",
            need: 2,
            got: m,
        });
    }
    if series.values.len() < m + 1 {
        return Err(FactError::TooShort {
            what: "prices for one volatility window",
            need: m + 1,
            got: series.values.len(),
        });
    }
    let lp = series.log_prices()?;
    let returns: Vec<f64> = lp.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = (seconds_per_year / series.period_s).sqrt();
    Ok(returns.chunks_exact(m).map(|c| stats::std_dev(c) * scale).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolComparison {
    /// `mean(100 (σs − σr) / σr)` over windows with `σr > 0`.
    pub relative_difference_pct: Option<f64>,
    /// `mean((σs − σr)^2)` over all aligned windows.
    pub quadratic_error: Option<f64>,
    pub windows: usize,
    /// Windows left out of the relative difference because `σr = 0`.
    pub excluded_zero_real: usize,
}

/// Compares aligned volatility series (the longer one is truncated).
pub fn compare_vol(sim: &[f64], real: &[f64]) -> VolComparison {
    let n = sim.len().min(real.len());
    let mut rel = Vec::with_capacity(n);
    let mut quad = Vec::with_capacity(n);
    let mut excluded = 0;
    for (s, r) in sim[..n].iter().zip(&real[..n]) {
        quad.push((s - r) * (s - r));
        if *r == 0.0 {
            excluded += 1;
        } else {
            rel.push(100.0 * (s - r) / r);
        }
    }
    let avg = |v: &[f64]| (!v.is_empty()).then(|| stats::mean(v));
    VolComparison {
        relative_difference_pct: avg(&rel),
        quadratic_error: avg(&quad),
        windows: n,
        excluded_zero_real: excluded,
    }
}

/// Traded volume (M and M_ALL sizes) per full window of `[start_ns, end_ns)`.
pub fn traded_volumes(log: &EventLog, start_ns: i64, end_ns: i64, window_ns: i64) -> Vec<u64> {
    if window_ns <= 0 || end_ns <= start_ns {
        return Vec::new();
    }
    let n = ((end_ns - start_ns) / window_ns) as usize;
    let mut out = vec![0u64; n];
    for ev in log.orders().filter(|e| e.eta.is_market()) {
        if ev.ts_ns < start_ns {
            continue;
        }
        let i = ((ev.ts_ns - start_ns) / window_ns) as usize;
        if i < n {
            out[i] += ev.size;
        }
    }
    out
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(FactError::Empty);
    }
    Ok(stats::ks_two_sample(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub shape: f64,
    pub scale: f64,
    /// KS distance of the sample to the fitted law.
    pub ks: f64,
}

/// Method-of-moments Gamma fit: shape = mean²/var, scale = var/mean.
pub fn fit_gamma(sample: &[f64]) -> Result<GammaFit> {
    if sample.len() < 30 {
        return Err(FactError::TooShort {
            what: "values for a Gamma fit",
            need: 30,
            got: sample.len(),
        });
    }
    if sample.iter().any(|&x| !(x > 0.0)) {
        return Err(FactError::Degenerate("Gamma fit needs positive values".into()));
    }
    let m = stats::mean(sample);
    let v = stats::variance(sample);
    if !(v > 0.0) {
        return Err(FactError::Degenerate("zero variance".into()));
    }
    let shape = m * m / v;
    let scale = v / m;
    let ks = stats::ks_one_sample(sample, |x| gamma_lr(shape, x.max(0.0) / scale));
    Ok(GammaFit { shape, scale, ks })
}

/// `V(P(t+h) − P(t)) / h` for each lag (in sampling steps); `h` in seconds.
pub fn signature_plot(series: &PriceSeries, lags: &[usize]) -> Result<Vec<(usize, f64)>> {
    let p = &series.values;
    lags.iter()
        .map(|&h| {
            if h == 0 || h + 1 >= p.len() {
                return Err(FactError::TooShort {
                    what: "prices for the signature lag",
                    need: h + 2,
                    got: p.len(),
                });
            }
            let inc: Vec<f64> = p.windows(h + 1).map(|w| w[h] - w[0]).collect();
            Ok((h, stats::variance(&inc) / (h as f64 * series.period_s)))
        })
        .collect()
}

/// Overlapping log returns `log(P(t+τ)/P(t))`, τ in sampling steps.
pub fn returns_sample(series: &PriceSeries, tau: usize) -> Result<Vec<f64>> {
    if tau == 0 || tau >= series.values.len() {
        return Err(FactError::TooShort {
            what: "prices for the return horizon",
            need: tau + 1,
            got: series.values.len(),
        });
    }
    let lp = series.log_prices()?;
    Ok(lp.windows(tau + 1).map(|w| w[tau] - w[0]).collect())
}

/// Non-overlapping log returns over `tau` steps.
pub fn block_returns(series: &PriceSeries, tau: usize) -> Result<Vec<f64>> {
    if tau == 0 || tau >= series.values.len() {
        return Err(FactError::TooShort {
            what: "prices for the return horizon",
            need: tau + 1,
            got: series.values.len(),
        });
    }
    let lp = series.log_prices()?;
    Ok(lp.iter().step_by(tau).collect::<Vec<_>>().windows(2).map(|w| w[1] - w[0]).collect())
}

/// Autocorrelation at each lag, as the Pearson correlation of `x[t]` and
/// `x[t+k]`. NaN where undefined (constant data or lag too long).
pub fn acf(x: &[f64], lags: &[usize]) -> Vec<f64> {
    lags.iter()
        .map(|&k| if k == 0 { 1.0 } else { stats::lagged_correlation(x, k) })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of log acf against log lag.
    pub exponent: f64,
    pub r_squared: f64,
    pub lags_used: usize,
    /// Lags dropped because their autocorrelation was not positive.
    pub lags_excluded: Vec<usize>,
    pub reliable: bool,
}

/// Power-law fit `acf(k) ~ c k^exponent` over the positive entries.
/// `noise_floor` is the level below which correlations are
/// indistinguishable from zero; the fit is flagged unreliable when most lags
/// sit below it, when fewer than 5 lags survive, or when R² < 0.5.
pub fn fit_acf_decay(lags: &[usize], acf: &[f64], noise_floor: f64) -> Result<DecayFit> {
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut excluded = Vec::new();
    let mut significant = 0;
    for (&k, &r) in lags.iter().zip(acf) {
        if r > 0.0 && k > 0 {
            lx.push((k as f64).ln());
            ly.push(r.ln());
            if r > noise_floor {
                significant += 1;
            }
        } else {
            excluded.push(k);
        }
    }
    let LinearFit { slope, r_squared, .. } = linear_fit(&lx, &ly).ok_or(FactError::TooShort {
        what: "positive autocorrelations",
        need: 2,
        got: lx.len(),
    })?;
    let reliable = lx.len() >= 5 && r_squared >= 0.5 && 2 * significant > lags.len();
    Ok(DecayFit {
        exponent: slope,
        r_squared,
        lags_used: lx.len(),
        lags_excluded: excluded,
        reliable,
    })
}

/// Decay of the autocorrelation of absolute returns over lags
/// `lo..=hi`. Needs at least 1000 returns.
pub fn long_range_dependence(returns: &[f64], lo: usize, hi: usize) -> Result<DecayFit> {
    if returns.len() < 1000 {
        return Err(FactError::TooShort {
            what: "returns for long-range dependence",
            need: 1000,
            got: returns.len(),
        });
    }
    let abs: Vec<f64> = returns.iter().map(|r| r.abs()).collect();
    let lags: Vec<usize> = (lo.max(1)..=hi).collect();
    let a = acf(&abs, &lags);
    fit_acf_decay(&lags, &a, 2.0 / (returns.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullFit {
    pub shape: f64,
    pub scale: f64,
    pub ks: f64,
    /// KS distance of the same sample to its maximum-likelihood exponential.
    pub exponential_ks: f64,
}

/// Maximum-likelihood Weibull fit. The shape solves the profile equation
/// `Σ x^k ln x / Σ x^k − 1/k − mean(ln x) = 0` by bisection; data are scaled
/// by their mean first for numerical range.
pub fn fit_weibull(sample: &[f64]) -> Result<WeibullFit> {
    if sample.len() < 2 {
        return Err(FactError::TooShort {
            what: "values for a Weibull fit",
            need: 2,
            got: sample.len(),
        });
    }
    if sample.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(FactError::Degenerate("Weibull fit needs positive finite values".into()));
    }
    let m = stats::mean(sample);
    let y: Vec<f64> = sample.iter().map(|x| x / m).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mean_ly = stats::mean(&ly);
    if ly.iter().all(|&l| (l - mean_ly).abs() < 1e-12) {
        return Err(FactError::Degenerate("all values equal".into()));
    }
    let g = |k: f64| {
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for &l in &ly {
            let w = (k * l).exp();
            s0 += w;
            s1 += w * l;
        }
        s1 / s0 - 1.0 / k - mean_ly
    };
    // g is increasing in k
    let (mut lo, mut hi) = (1e-3, 1.0);
    while g(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(FactError::Degenerate("Weibull shape diverges".into()));
        }
    }
    while g(lo) > 0.0 {
        lo *= 0.5;
        if lo < 1e-9 {
            return Err(FactError::Degenerate("Weibull shape collapses".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi {
            break;
        }
    }
    let shape = 0.5 * (lo + hi);
    let mk = y.iter().map(|v| v.powf(shape)).sum::<f64>() / y.len() as f64;
    let scale = m * mk.powf(1.0 / shape);
    let ks = stats::ks_one_sample(sample, |x| 1.0 - (-(x.max(0.0) / scale).powf(shape)).exp());
    let exponential_ks = stats::ks_one_sample(sample, |x| 1.0 - (-x.max(0.0) / m).exp());
    Ok(WeibullFit {
        shape,
        scale,
        ks,
        exponential_ks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Tail exponent `α` in `P(X ≥ x) ~ x^−α`.
    pub exponent: f64,
    pub r_squared: f64,
    pub tail_size: usize,
    /// `(x, survival)` points used by the regression.
    pub points: Vec<(f64, f64)>,
}

/// Tail exponent by regressing log survival on log size over a log-spaced
/// grid from `cutoff` to the maximum. Grid points with fewer than 5 sample
/// values at or above them are dropped as too noisy.
pub fn fit_power_law(sizes: &[f64], cutoff: f64) -> Result<PowerLawFit> {
    if !(cutoff > 0.0) {
        return Err(FactError::Degenerate(format!("cutoff {cutoff}")));
    }
    let mut tail: Vec<f64> = sizes.iter().copied().filter(|&x| x >= cutoff).collect();
    if tail.len() < 100 {
        return Err(FactError::TooShort {
            what: "values above the power-law cutoff",
            need: 100,
            got: tail.len(),
        });
    }
    tail.sort_by(f64::total_cmp);
    let n = tail.len() as f64;
    let max = tail[tail.len() - 1];
    let mut xs: Vec<f64> = Vec::new();
    if max > cutoff {
        let steps = 30;
        let ratio = (max / cutoff).ln() / steps as f64;
        for i in 0..=steps {
            let x = cutoff * (ratio * i as f64).exp();
            // snap to sample values so discrete sizes give distinct points
            let j = tail.partition_point(|&v| v < x);
            if j < tail.len() {
                xs.push(tail[j]);
            }
        }
        xs.dedup();
    }
    let mut points = Vec::new();
    for &x in &xs {
        let at_or_above = tail.len() - tail.partition_point(|&v| v < x);
        if at_or_above >= 5 {
            points.push((x, at_or_above as f64 / n));
        }
    }
    if points.len() < 3 {
        return Err(FactError::Degenerate(format!(
            "only {} distinct tail points above the cutoff",
            points.len()
        )));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let fit = linear_fit(&lx, &ly).ok_or_else(|| FactError::Degenerate("flat tail".into()))?;
    Ok(PowerLawFit {
        exponent: -fit.slope,
        r_squared: fit.r_squared,
        tail_size: tail.len(),
        points,
    })
}

/// Empirical `P(next | previous)` over consecutive best-quote events, in
/// the six Hawkes components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub counts: Vec<Vec<u64>>,
    /// Row-stochastic; `None` rows were never observed as a previous event.
    pub probs: Vec<Option<Vec<f64>>>,
    /// Unconditional frequency of each component.
    pub marginal: Vec<f64>,
    pub unseen_rows: Vec<usize>,
}

impl TransitionMatrix {
    /// Mean of `P(i|i) / π_i` over rows that were seen and have `π_i > 0`.
    pub fn diagonal_enrichment(&self) -> Option<f64> {
        let v: Vec<f64> = (0..ORDER_FLOW_DIM)
            .filter_map(|i| {
                let row = self.probs[i].as_ref()?;
                (self.marginal[i] > 0.0).then(|| row[i] / self.marginal[i])
            })
            .collect();
        (!v.is_empty()).then(|| stats::mean(&v))
    }

    /// `max |P(j|i) − π_j|` over seen rows.
    pub fn max_row_deviation(&self) -> Option<f64> {
        self.probs
            .iter()
            .flatten()
            .flat_map(|row| row.iter().zip(&self.marginal).map(|(p, m)| (p - m).abs()))
            .reduce(f64::max)
    }

    /// `max |P_a − P_b|` over rows seen in both.
    pub fn linf_distance(&self, other: &TransitionMatrix) -> Option<f64> {
        self.probs
            .iter()
            .zip(&other.probs)
            .filter_map(|(a, b)| Some((a.as_ref()?, b.as_ref()?)))
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .reduce(f64::max)
    }
}

pub fn transition_matrix(log: &EventLog) -> Result<TransitionMatrix> {
    let seq: Vec<usize> = log
        .orders()
        .filter(|e| e.level == 1)
        .map(|e| component_of(e.eta, e.side))
        .collect();
    if seq.len() < 2 {
        return Err(FactError::TooShort {
            what: "best-quote events",
            need: 2,
            got: seq.len(),
        });
    }
    let d = ORDER_FLOW_DIM;
    let mut counts = vec![vec![0u64; d]; d];
    for w in seq.windows(2) {
        counts[w[0]][w[1]] += 1;
    }
    let mut marginal = vec![0.0; d];
    for &c in &seq {
        marginal[c] += 1.0;
    }
    for m in &mut marginal {
        *m /= seq.len() as f64;
    }
    let mut unseen_rows = Vec::new();
    let probs = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                unseen_rows.push(i);
                None
            } else {
                Some(row.iter().map(|&c| c as f64 / total as f64).collect())
            }
        })
        .collect();
    Ok(TransitionMatrix {
        counts,
        probs,
        marginal,
        unseen_rows,
    })
}

/// Time-averaged volume per level (bid and ask averaged), divided by the
/// mean over levels so the profile averages to 1. All zeros for an empty
/// book.
pub fn book_shape(log: &EventLog) -> Result<Vec<f64>> {
    let k = log.depth();
    let mut acc = vec![0.0f64; k];
    let mut prev_ts = log.start_ns;
    let mut prev: Vec<u64> = (0..k).map(|i| log.initial.bids[i] + log.initial.asks[i]).collect();
    let add = |acc: &mut [f64], vols: &[u64], dt: i64| {
        if dt > 0 {
            for (a, &v) in acc.iter_mut().zip(vols) {
                *a += v as f64 * dt as f64;
            }
        }
    };
    log.replay(|_, rec, state| {
        let ts = rec.item.ts_ns().clamp(prev_ts, log.end_ns.max(prev_ts));
        add(&mut acc, &prev, ts - prev_ts);
        prev_ts = ts;
        for (i, p) in prev.iter_mut().enumerate() {
            *p = state.bids[i] + state.asks[i];
        }
    })
    .map_err(|e| FactError::Log(e.to_string()))?;
    add(&mut acc, &prev, log.end_ns - prev_ts);
    Ok(normalize_shape(acc))
}

/// Scales a profile to mean 1 (zeros stay zeros).
pub fn normalize_shape(mut v: Vec<f64>) -> Vec<f64> {
    let m = stats::mean(&v);
    if m > 0.0 {
        for x in &mut v {
            *x /= m;
        }
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::FlowItem;
    use crate::lob::{LobState, OrderEvent};
    use crate::types::{EventType, Side};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, Gamma, Normal, Pareto, Weibull};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn gaussian_walk(n: usize, sigma: f64, seed: u64, log_space: bool) -> PriceSeries {
        let mut r = rng(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut x = if log_space { 100f64.ln() } else { 100.0 };
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(if log_space { x.exp() } else { x });
            x += normal.sample(&mut r);
        }
        PriceSeries::new(1.0, v)
    }

    #[test]
    fn volatility_of_constant_and_gaussian_prices() {
        let flat = PriceSeries::new(1.0, vec![100.0; 1201]);
        let v = realized_volatility(&flat, 600.0, TRADING_SECONDS_PER_YEAR).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
        let s = gaussian_walk(60_001, 1e-4, 1, true);
        let v = realized_volatility(&s, 600.0, TRADING_SECONDS_PER_YEAR).unwrap();
        let want = 1e-4 * TRADING_SECONDS_PER_YEAR.sqrt();
        let got = stats::mean(&v);
        assert!((got / want - 1.0).abs() < 0.05, "{got} vs {want}");
    }

    #[test]
    fn volatility_preconditions() {
        let s = PriceSeries::new(1.0, vec![100.0; 100]);
        assert!(matches!(realized_volatility(&s, 600.0, 1.0), Err(FactError::TooShort { .. })));
        let s = PriceSeries::new(2.0, vec![100.0; 1000]);
        assert!(matches!(realized_volatility(&s, 601.0, 1.0), Err(FactError::NotMultiple { .. })));
    }

    #[test]
    fn vol_comparison_definitions() {
        let real = vec![1.0; 4];
        let c = compare_vol(&real, &real);
        assert_eq!((c.relative_difference_pct, c.quadratic_error), (Some(0.0), Some(0.0)));
        let c = compare_vol(&[2.0; 4], &real);
        assert_eq!((c.relative_difference_pct, c.quadratic_error), (Some(100.0), Some(1.0)));
        let c = compare_vol(&[1.0, 2.0], &[0.0, 1.0]);
        assert_eq!(c.excluded_zero_real, 1);
        assert_eq!(c.relative_difference_pct, Some(100.0));
        assert_eq!(c.quadratic_error, Some(1.0));
    }

    fn log_with(events: Vec<OrderEvent>, start: i64, end: i64) -> EventLog {
        let mut state = LobState::flat(0.01, 20_001, 2, 1_000_000).unwrap();
        let mut log = EventLog::new(state.clone(), start, end);
        for ev in events {
            let mut ev = ev;
            ev.q_before = state.queue(ev.side, ev.level).unwrap();
            state.apply(&ev).unwrap();
            log.push(FlowItem::Order(ev), &state);
        }
        log
    }

    fn order(ts_ns: i64, eta: EventType, side: Side, level: usize, size: u64) -> OrderEvent {
        OrderEvent {
            ts_ns,
            eta,
            side,
            level,
            size,
            dt_ns: 0,
            q_before: 0,
        }
    }

    #[test]
    fn traded_volume_windows() {
        let w = 600 * 1_000_000_000i64;
        let empty = log_with(vec![order(5, EventType::Limit, Side::Bid, 1, 3)], 0, 3 * w);
        assert_eq!(traded_volumes(&empty, 0, 3 * w, w), vec![0, 0, 0]);
        let ev: Vec<OrderEvent> = (0..3).map(|i| order(i * w + 7, EventType::Market, Side::Ask, 1, 5)).collect();
        let log = log_with(ev, 0, 3 * w);
        assert_eq!(traded_volumes(&log, 0, 3 * w, w), vec![5, 5, 5]);
    }

    #[test]
    fn traded_volume_wald_identity() {
        // Poisson trades at 2/s with sizes uniform on 1..=9 (mean 5)
        let mut r = rng(3);
        let exp = Exp::new(2.0).unwrap();
        let mut t = 0.0;
        let mut ev = Vec::new();
        let horizon = 60_000.0;
        loop {
            t += exp.sample(&mut r);
            if t >= horizon {
                break;
            }
            ev.push(order((t * 1e9) as i64, EventType::Market, Side::Bid, 1, r.random_range(1..=9)));
        }
        let log = log_with(ev, 0, (horizon * 1e9) as i64);
        let v = traded_volumes(&log, 0, log.end_ns, 600 * 1_000_000_000);
        let mean = v.iter().sum::<u64>() as f64 / v.len() as f64;
        assert!((mean / (2.0 * 600.0 * 5.0) - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn ks_properties() {
        assert!(ks_statistic(&[], &[1.0]).is_err());
        let mut r = rng(8);
        let a: Vec<f64> = (0..300).map(|_| r.random::<f64>()).collect();
        let b: Vec<f64> = (0..200).map(|_| r.random::<f64>() * 1.3).collect();
        let d = ks_statistic(&a, &b).unwrap();
        assert_eq!(d, ks_statistic(&b, &a).unwrap());
        let ta: Vec<f64> = a.iter().map(|x| x.exp() * 3.0).collect();
        let tb: Vec<f64> = b.iter().map(|x| x.exp() * 3.0).collect();
        assert_eq!(d, ks_statistic(&ta, &tb).unwrap());
    }

    #[test]
    fn gamma_fits() {
        let mut r = rng(4);
        let e: Vec<f64> = (0..10_000).map(|_| Exp::new(1.0).unwrap().sample(&mut r)).collect();
        let f = fit_gamma(&e).unwrap();
        assert!((f.shape - 1.0).abs() < 0.1, "{f:?}");
        let g: Vec<f64> = (0..20_000).map(|_| Gamma::new(3.0, 2.0).unwrap().sample(&mut r)).collect();
        let f = fit_gamma(&g).unwrap();
        assert!((f.shape / 3.0 - 1.0).abs() < 0.1 && (f.scale / 2.0 - 1.0).abs() < 0.1, "{f:?}");
        assert!(f.ks < 0.02);
        assert!(fit_gamma(&[2.0; 50]).is_err());
    }

    #[test]
    fn signature_plot_shapes() {
        let s = gaussian_walk(100_000, 0.5, 9, false);
        let lags: Vec<usize> = vec![1, 2, 5, 10, 50];
        for (h, v) in signature_plot(&s, &lags).unwrap() {
            assert!((v / 0.25 - 1.0).abs() < 0.05, "lag {h}: {v}");
        }
        // AR(1) with strong mean reversion
        let mut r = rng(10);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut x = 0.0;
        let v: Vec<f64> = (0..50_000)
            .map(|_| {
                x = 0.3 * x + normal.sample(&mut r);
                100.0 + x
            })
            .collect();
        let sp = signature_plot(&PriceSeries::new(1.0, v), &[1, 2, 4, 8, 16]).unwrap();
        assert!(sp.windows(2).all(|w| w[1].1 < w[0].1));
        let flat = signature_plot(&PriceSeries::new(1.0, vec![3.0; 100]), &[1, 10]).unwrap();
        assert!(flat.iter().all(|p| p.1 == 0.0));
        assert!(signature_plot(&PriceSeries::new(1.0, vec![3.0; 100]), &[200]).is_err());
    }

    #[test]
    fn returns_samples() {
        let c = returns_sample(&PriceSeries::new(1.0, vec![5.0; 10]), 3).unwrap();
        assert!(c.iter().all(|&r| r == 0.0));
        let d: Vec<f64> = (0..10).map(|i| 2f64.powi(i)).collect();
        let r = returns_sample(&PriceSeries::new(1.0, d), 1).unwrap();
        assert!(r.iter().all(|&x| (x - 2f64.ln()).abs() < 1e-12));
        assert!(returns_sample(&PriceSeries::new(1.0, vec![5.0; 10]), 10).is_err());
        assert!(returns_sample(&PriceSeries::new(1.0, vec![5.0, -1.0]), 1).is_err());
    }

    #[test]
    fn acf_examples() {
        let mut r = rng(12);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut r)).collect();
        let lags: Vec<usize> = (1..=100).collect();
        let a = acf(&x, &lags);
        let band = 2.0 / (x.len() as f64).sqrt();
        let inside = a.iter().filter(|v| v.abs() < band).count();
        assert!(inside >= 95, "{inside}");
        assert_eq!(acf(&x, &[0]), vec![1.0]);
        let alt: Vec<f64> = (0..101).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((acf(&alt, &[1])[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn decay_of_exact_power_law() {
        let lags: Vec<usize> = (1..=50).collect();
        let a: Vec<f64> = lags.iter().map(|&k| 0.3 * (k as f64).powf(-0.4)).collect();
        let f = fit_acf_decay(&lags, &a, 0.01).unwrap();
        assert!((f.exponent + 0.4).abs() < 0.02, "{f:?}");
        assert!(f.reliable);
    }

    #[test]
    fn decay_of_noise_is_unreliable() {
        let mut r = rng(13);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..20_000).map(|_| normal.sample(&mut r)).collect();
        let f = long_range_dependence(&x, 1, 100).unwrap();
        assert!(!f.reliable, "{f:?}");
        assert!(!f.lags_excluded.is_empty());
        assert!(long_range_dependence(&x[..500], 1, 100).is_err());
    }

    #[test]
    fn decay_of_volatility_clusters() {
        // log-volatility as a sum of AR(1) factors on several time scales
        let mut r = rng(14);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let taus = [4.0, 16.0, 64.0, 256.0, 1024.0];
        let mut f = [0.0f64; 5];
        let x: Vec<f64> = (0..200_000)
            .map(|_| {
                let mut lv = 0.0;
                for (fi, tau) in f.iter_mut().zip(taus) {
                    let phi = 1.0 - 1.0 / tau;
                    *fi = phi * *fi + (1.0 - phi * phi).sqrt() * normal.sample(&mut r);
                    lv += 0.35 * *fi;
                }
                lv.exp() * normal.sample(&mut r)
            })
            .collect();
        let fit = long_range_dependence(&x, 1, 100).unwrap();
        assert!(fit.exponent < 0.0 && fit.r_squared > 0.8, "{fit:?}");
        assert!(fit.reliable);
    }

    #[test]
    fn weibull_fits() {
        let mut r = rng(15);
        let e: Vec<f64> = (0..10_000).map(|_| Exp::new(3.0).unwrap().sample(&mut r)).collect();
        let f = fit_weibull(&e).unwrap();
        assert!((f.shape - 1.0).abs() < 0.05, "{f:?}");
        let w: Vec<f64> = (0..10_000).map(|_| Weibull::new(1.0, 0.5).unwrap().sample(&mut r)).collect();
        let f = fit_weibull(&w).unwrap();
        assert!((f.shape / 0.5 - 1.0).abs() < 0.1 && (f.scale - 1.0).abs() < 0.1, "{f:?}");
        assert!(f.ks < f.exponential_ks);
        assert!(fit_weibull(&[]).is_err());
        assert!(fit_weibull(&[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn power_law_fits() {
        let mut r = rng(16);
        let p: Vec<f64> = (0..20_000).map(|_| Pareto::new(1.0, 2.0).unwrap().sample(&mut r)).collect();
        let f = fit_power_law(&p, 1.0).unwrap();
        assert!((f.exponent / 2.0 - 1.0).abs() < 0.1, "{f:?}");
        assert!(fit_power_law(&vec![3.0; 500], 1.0).is_err());
        assert!(fit_power_law(&p, 1e9).is_err());
    }

    fn typed_log(types: &[(EventType, Side)]) -> EventLog {
        let ev = types
            .iter()
            .enumerate()
            .map(|(i, &(eta, side))| order(i as i64 + 1, eta, side, 1, 1))
            .collect();
        log_with(ev, 0, types.len() as i64 + 1)
    }

    #[test]
    fn transition_of_alternating_stream() {
        let seq: Vec<(EventType, Side)> = (0..100)
            .map(|i| if i % 2 == 0 { (EventType::Limit, Side::Bid) } else { (EventType::Cancel, Side::Bid) })
            .collect();
        let t = transition_matrix(&typed_log(&seq)).unwrap();
        assert_eq!(t.probs[0].as_ref().unwrap()[1], 1.0);
        assert_eq!(t.probs[1].as_ref().unwrap()[0], 1.0);
        assert_eq!(t.unseen_rows, vec![2, 3, 4, 5]);
    }

    #[test]
    fn transition_of_iid_stream_has_flat_rows() {
        let mut r = rng(17);
        let seq: Vec<(EventType, Side)> = (0..60_000)
            .map(|_| {
                let c = r.random_range(0..6);
                (EventType::BASE[c % 3], Side::BOTH[c / 3])
            })
            .collect();
        let t = transition_matrix(&typed_log(&seq)).unwrap();
        for row in t.probs.iter().flatten() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(t.max_row_deviation().unwrap() < 0.02);
        assert!((t.diagonal_enrichment().unwrap() - 1.0).abs() < 0.05);
        assert_eq!(t.linf_distance(&t), Some(0.0));
    }

    #[test]
    fn book_shape_profiles() {
        let flat = EventLog::new(LobState::flat(0.01, 21, 4, 7).unwrap(), 0, 100);
        assert_eq!(book_shape(&flat).unwrap(), vec![1.0; 4]);
        let deep = LobState::new(0.01, 21, vec![1, 2, 3, 4], vec![1, 2, 3, 4]).unwrap();
        let s = book_shape(&EventLog::new(deep, 0, 100)).unwrap();
        assert!(s.windows(2).all(|w| w[1] > w[0]));
        assert!((stats::mean(&s) - 1.0).abs() < 1e-12);
        // time weighting: level 1 doubles for the second half
        let mut log = EventLog::new(LobState::flat(0.01, 21, 2, 2).unwrap(), 0, 100);
        let mut st = log.initial.clone();
        for side in Side::BOTH {
            let ev = OrderEvent {
                ts_ns: 50,
                eta: EventType::Limit,
                side,
                level: 1,
                size: 2,
                dt_ns: 50,
                q_before: 2,
            };
            st.apply(&ev).unwrap();
            log.push(FlowItem::Order(ev), &st);
        }
        let s = book_shape(&log).unwrap();
        assert!((s[0] / s[1] - 1.5).abs() < 1e-12, "{s:?}");
    }
}
