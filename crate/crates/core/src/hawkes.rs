//! Multivariate Hawkes processes with exponential kernels
//! `h_ij(t) = alpha_ij exp(-beta_ij t)`.
//!
//! The order-flow model uses six components at the best quotes, ordered
//! `L_bid, C_bid, M_bid, L_ask, C_ask, M_ask` (see [`component_of`]).
//!
//! Every evaluation walks the events once, carrying for each pair `(i, j)`
//! `R_ij(t) = Σ_{t_l < t, l in j} exp(-beta_ij (t - t_l))` and, for the beta
//! gradient, `B_ij(t) = Σ (t - t_l) exp(-beta_ij (t - t_l))`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{ks_one_sample, ks_pvalue};
use crate::types::{EventType, Side};

pub const ORDER_FLOW_DIM: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum HawkesError {
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("non-stationary model: spectral radius {0} >= 1")]
    NonStationary(f64),
    #[error("need events from at least {need} components, saw {got}")]
    TooFewComponents { need: usize, got: usize },
    #[error("events must be sorted, inside [0, horizon] and in components 0..{0}")]
    BadEvents(usize),
}

/// Hawkes component of an order-flow event at the best quotes.
pub fn component_of(eta: EventType, side: Side) -> usize {
    side.index() * 3 + eta.base_index()
}

/// Inverse of [`component_of`].
pub fn component_meaning(c: usize) -> (EventType, Side) {
    (EventType::BASE[c % 3], Side::BOTH[c / 3])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesModel {
    pub dim: usize,
    pub mu: Vec<f64>,
    /// `alpha[i][j]`: jump of component `i`'s intensity after a `j` event.
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
}

impl HawkesModel {
    pub fn new(mu: Vec<f64>, alpha: Vec<Vec<f64>>, beta: Vec<Vec<f64>>) -> Result<Self, HawkesError> {
        let m = HawkesModel {
            dim: mu.len(),
            mu,
            alpha,
            beta,
        };
        m.validate()?;
        Ok(m)
    }

    /// Independent Poisson processes.
    pub fn poisson(mu: Vec<f64>) -> Result<Self, HawkesError> {
        let d = mu.len();
        Self::new(mu, vec![vec![0.0; d]; d], vec![vec![1.0; d]; d])
    }

    pub fn validate(&self) -> Result<(), HawkesError> {
        let d = self.dim;
        if d == 0 || self.mu.len() != d {
            return Err(HawkesError::Shape(format!("mu has {} entries for dim {d}", self.mu.len())));
        }
        for (name, m) in [("alpha", &self.alpha), ("beta", &self.beta)] {
            if m.len() != d || m.iter().any(|r| r.len() != d) {
                return Err(HawkesError::Shape(format!("{name} must be {d}x{d}")));
            }
        }
        if self.mu.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(HawkesError::Parameter("mu must be positive".into()));
        }
        if self.alpha.iter().flatten().any(|&x| !(x.is_finite() && x >= 0.0)) {
            return Err(HawkesError::Parameter("alpha must be non-negative".into()));
        }
        if self.beta.iter().flatten().any(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(HawkesError::Parameter("beta must be positive".into()));
        }
        Ok(())
    }

    /// Branching matrix `A_ij = alpha_ij / beta_ij` and its spectral radius.
    pub fn branching_matrix(&self) -> (DMatrix<f64>, f64) {
        let d = self.dim;
        let a = DMatrix::from_fn(d, d, |i, j| self.alpha[i][j] / self.beta[i][j]);
        let radius = a
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        (a, radius)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.branching_matrix().1
    }

    pub fn check_stationary(&self) -> Result<(), HawkesError> {
        let r = self.spectral_radius();
        if r >= 1.0 {
            return Err(HawkesError::NonStationary(r));
        }
        Ok(())
    }

    /// Long-run component rates `(I - A)^{-1} mu`.
    pub fn stationary_rates(&self) -> Result<Vec<f64>, HawkesError> {
        self.check_stationary()?;
        let (a, _) = self.branching_matrix();
        let m = DMatrix::<f64>::identity(self.dim, self.dim) - a;
        let mu = nalgebra::DVector::from_vec(self.mu.clone());
        let x = m
            .lu()
            .solve(&mu)
            .ok_or_else(|| HawkesError::Parameter("I - A is singular".into()))?;
        Ok(x.iter().copied().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkedEvent {
    /// Seconds from the start of the realization.
    pub t: f64,
    pub component: usize,
    /// Lots; 0 until a sizing policy assigns one.
    pub size: u64,
}

/// Decaying kernel sums carried between events.
struct Recursion<'a> {
    model: &'a HawkesModel,
    t: f64,
    r: Vec<f64>,
}

impl<'a> Recursion<'a> {
    fn new(model: &'a HawkesModel) -> Self {
        Recursion {
            model,
            t: 0.0,
            r: vec![0.0; model.dim * model.dim],
        }
    }

    fn advance(&mut self, t: f64) {
        let d = self.model.dim;
        let dt = t - self.t;
        if dt > 0.0 {
            for i in 0..d {
                for j in 0..d {
                    self.r[i * d + j] *= (-self.model.beta[i][j] * dt).exp();
                }
            }
        }
        self.t = t;
    }

    fn intensity(&self, i: usize) -> f64 {
        let d = self.model.dim;
        let mut lam = self.model.mu[i];
        for j in 0..d {
            lam += self.model.alpha[i][j] * self.r[i * d + j];
        }
        lam
    }

    fn record(&mut self, component: usize) {
        let d = self.model.dim;
        for i in 0..d {
            self.r[i * d + component] += 1.0;
        }
    }
}

/// Intensity vector at `t` given the events of `history` strictly before `t`.
pub fn intensity_at(model: &HawkesModel, history: &[MarkedEvent], t: f64) -> Vec<f64> {
    let mut rec = Recursion::new(model);
    for ev in history.iter().take_while(|e| e.t < t) {
        rec.advance(ev.t);
        rec.record(ev.component);
    }
    rec.advance(t);
    (0..model.dim).map(|i| rec.intensity(i)).collect()
}

/// Direct double sum, for testing the recursion.
pub fn intensity_naive(model: &HawkesModel, history: &[MarkedEvent], t: f64) -> Vec<f64> {
    (0..model.dim)
        .map(|i| {
            model.mu[i]
                + history
                    .iter()
                    .filter(|e| e.t < t)
                    .map(|e| model.alpha[i][e.component] * (-model.beta[i][e.component] * (t - e.t)).exp())
                    .sum::<f64>()
        })
        .collect()
}

/// One realization on `[0, horizon]` by Ogata thinning. Between events the
/// total intensity only decays, so its value right after the last accepted
/// (or rejected) point bounds it until the next one.
pub fn simulate<R: Rng + ?Sized>(model: &HawkesModel, horizon: f64, rng: &mut R) -> Result<Vec<MarkedEvent>, HawkesError> {
    model.validate()?;
    model.check_stationary()?;
    let d = model.dim;
    let mut rec = Recursion::new(model);
    let mut out = Vec::new();
    let mut lam = vec![0.0; d];
    let mut t = 0.0;
    loop {
        let bound: f64 = (0..d).map(|i| rec.intensity(i)).sum();
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / bound;
        if t > horizon {
            break;
        }
        rec.advance(t);
        let mut total = 0.0;
        for (i, l) in lam.iter_mut().enumerate() {
            *l = rec.intensity(i);
            total += *l;
        }
        let v: f64 = rng.random::<f64>() * bound;
        if v >= total {
            continue;
        }
        let mut acc = 0.0;
        let mut comp = d - 1;
        for (i, l) in lam.iter().enumerate() {
            acc += l;
            if v < acc {
                comp = i;
                break;
            }
        }
        rec.record(comp);
        out.push(MarkedEvent {
            t,
            component: comp,
            size: 0,
        });
    }
    Ok(out)
}

fn check_events(dim: usize, events: &[MarkedEvent], horizon: f64) -> Result<(), HawkesError> {
    let sorted = events.windows(2).all(|w| w[0].t <= w[1].t);
    let inside = events.iter().all(|e| e.t >= 0.0 && e.t <= horizon && e.component < dim);
    if !(sorted && inside) {
        return Err(HawkesError::BadEvents(dim));
    }
    Ok(())
}

/// Gradient of the log-likelihood in natural parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub mu: Vec<f64>,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
}

/// Exact log-likelihood of one realization on `[0, horizon]`:
/// `Σ_i [Σ_{k in i} log λ_i(t_k) - mu_i T - Σ_j (alpha_ij / beta_ij) Σ_{l in j} (1 - exp(-beta_ij (T - t_l)))]`.
pub fn log_likelihood(model: &HawkesModel, events: &[MarkedEvent], horizon: f64) -> (f64, Gradient) {
    let d = model.dim;
    let mut ll = 0.0;
    let mut g_mu = vec![0.0; d];
    let mut g_a = vec![0.0; d * d];
    let mut g_b = vec![0.0; d * d];
    let mut r = vec![0.0; d * d];
    let mut b = vec![0.0; d * d];
    let mut last = 0.0;
    for ev in events {
        let dt = ev.t - last;
        if dt > 0.0 {
            for i in 0..d {
                for j in 0..d {
                    let k = i * d + j;
                    let e = (-model.beta[i][j] * dt).exp();
                    b[k] = e * (b[k] + dt * r[k]);
                    r[k] *= e;
                }
            }
        }
        last = ev.t;
        let i = ev.component;
        let mut lam = model.mu[i];
        for j in 0..d {
            lam += model.alpha[i][j] * r[i * d + j];
        }
        ll += lam.ln();
        let inv = 1.0 / lam;
        g_mu[i] += inv;
        for j in 0..d {
            let k = i * d + j;
            g_a[k] += r[k] * inv;
            g_b[k] -= model.alpha[i][j] * b[k] * inv;
        }
        for row in 0..d {
            r[row * d + i] += 1.0;
        }
    }
    // compensator
    let mut s = vec![0.0; d * d]; // Σ_l (1 - e^{-β u_l})
    let mut su = vec![0.0; d * d]; // Σ_l u_l e^{-β u_l}
    for ev in events {
        let u = horizon - ev.t;
        let j = ev.component;
        for i in 0..d {
            let k = i * d + j;
            let e = (-model.beta[i][j] * u).exp();
            s[k] += 1.0 - e;
            su[k] += u * e;
        }
    }
    for i in 0..d {
        ll -= model.mu[i] * horizon;
        g_mu[i] -= horizon;
        for j in 0..d {
            let k = i * d + j;
            let (al, be) = (model.alpha[i][j], model.beta[i][j]);
            ll -= al / be * s[k];
            g_a[k] -= s[k] / be;
            g_b[k] -= -al / (be * be) * s[k] + al / be * su[k];
        }
    }
    let to_rows = |v: Vec<f64>| v.chunks(d).map(|c| c.to_vec()).collect::<Vec<_>>();
    (
        ll,
        Gradient {
            mu: g_mu,
            alpha: to_rows(g_a),
            beta: to_rows(g_b),
        },
    )
}

/// Compensator increments between consecutive events of each component
/// (the first measured from 0). Under the true model they are i.i.d. Exp(1).
pub fn time_rescaled_residuals(model: &HawkesModel, events: &[MarkedEvent]) -> Vec<f64> {
    let d = model.dim;
    let mut rec = Recursion::new(model);
    let mut acc = vec![0.0; d];
    let mut out = Vec::with_capacity(events.len());
    for ev in events {
        let dt = ev.t - rec.t;
        if dt > 0.0 {
            for (i, a) in acc.iter_mut().enumerate() {
                *a += model.mu[i] * dt;
                for j in 0..d {
                    let (al, be) = (model.alpha[i][j], model.beta[i][j]);
                    *a += al / be * rec.r[i * d + j] * (1.0 - (-be * dt).exp());
                }
            }
        }
        rec.advance(ev.t);
        out.push(acc[ev.component]);
        acc[ev.component] = 0.0;
        rec.record(ev.component);
    }
    out
}

/// KS statistic and asymptotic p-value of residuals against Exp(1).
pub fn residual_ks(residuals: &[f64]) -> (f64, f64) {
    let d = ks_one_sample(residuals, |x| 1.0 - (-x.max(0.0)).exp());
    (d, ks_pvalue(d, residuals.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Convergence when the gradient norm of the per-event objective (in log
    /// parameters) falls below this.
    pub grad_tol: f64,
    /// One beta shared by every pair.
    pub shared_beta: bool,
    pub memory: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 500,
            grad_tol: 1e-6,
            shared_beta: false,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: HawkesModel,
    pub log_likelihood: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// A realization and its observation horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub events: Vec<MarkedEvent>,
    pub horizon: f64,
}

/// Default starting point: half the empirical rates as baselines, branching
/// ratios of `0.5 / dim` and decays equal to the total empirical rate.
pub fn initial_guess(dim: usize, data: &[Realization]) -> Result<HawkesModel, HawkesError> {
    let total_t: f64 = data.iter().map(|r| r.horizon).sum();
    let mut counts = vec![0usize; dim];
    for r in data {
        for e in &r.events {
            if e.component < dim {
                counts[e.component] += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    if total_t <= 0.0 || total == 0 {
        return Err(HawkesError::TooFewComponents { need: dim, got: 0 });
    }
    let beta = (total as f64 / total_t).max(1e-3);
    let mu = counts.iter().map(|&c| (0.5 * c as f64 / total_t).max(1e-6)).collect();
    let a = 0.5 / dim as f64 * beta;
    HawkesModel::new(mu, vec![vec![a; dim]; dim], vec![vec![beta; dim]; dim])
}

struct Objective<'a> {
    dim: usize,
    data: &'a [Realization],
    shared_beta: bool,
    scale: f64,
}

impl Objective<'_> {
    fn n_params(&self) -> usize {
        let d = self.dim;
        d + d * d + if self.shared_beta { 1 } else { d * d }
    }

    fn pack(&self, m: &HawkesModel) -> Vec<f64> {
        let mut x: Vec<f64> = m.mu.iter().map(|v| v.ln()).collect();
        x.extend(m.alpha.iter().flatten().map(|v| v.max(1e-12).ln()));
        if self.shared_beta {
            let mean = m.beta.iter().flatten().sum::<f64>() / (self.dim * self.dim) as f64;
            x.push(mean.ln());
        } else {
            x.extend(m.beta.iter().flatten().map(|v| v.ln()));
        }
        x
    }

    fn unpack(&self, x: &[f64]) -> HawkesModel {
        let d = self.dim;
        let mu = x[..d].iter().map(|v| v.exp()).collect();
        let alpha = x[d..d + d * d].chunks(d).map(|c| c.iter().map(|v| v.exp()).collect()).collect();
        let beta = if self.shared_beta {
            vec![vec![x[d + d * d].exp(); d]; d]
        } else {
            x[d + d * d..].chunks(d).map(|c| c.iter().map(|v| v.exp()).collect()).collect()
        };
        HawkesModel { dim: d, mu, alpha, beta }
    }

    /// Negative scaled log-likelihood and its gradient in log parameters.
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d = self.dim;
        let m = self.unpack(x);
        let mut ll = 0.0;
        let mut g = vec![0.0; self.n_params()];
        for r in self.data {
            let (v, gr) = log_likelihood(&m, &r.events, r.horizon);
            ll += v;
            for i in 0..d {
                g[i] += gr.mu[i] * m.mu[i];
                for j in 0..d {
                    g[d + i * d + j] += gr.alpha[i][j] * m.alpha[i][j];
                    let gb = gr.beta[i][j] * m.beta[i][j];
                    if self.shared_beta {
                        g[d + d * d] += gb;
                    } else {
                        g[d + d * d + i * d + j] += gb;
                    }
                }
            }
        }
        if !ll.is_finite() {
            return (f64::INFINITY, g);
        }
        (-ll * self.scale, g.iter().map(|v| -v * self.scale).collect())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximum-likelihood fit over one or more realizations by L-BFGS in log
/// parameters with Armijo backtracking.
pub fn fit_many(data: &[Realization], init: &HawkesModel, opts: &FitOptions) -> Result<FitResult, HawkesError> {
    init.validate()?;
    let d = init.dim;
    let mut seen = vec![false; d];
    let mut n_events = 0usize;
    for r in data {
        check_events(d, &r.events, r.horizon)?;
        for e in &r.events {
            seen[e.component] = true;
        }
        n_events += r.events.len();
    }
    let got = seen.iter().filter(|&&s| s).count();
    if got < d {
        return Err(HawkesError::TooFewComponents { need: d, got });
    }
    let obj = Objective {
        dim: d,
        data,
        shared_beta: opts.shared_beta,
        scale: 1.0 / n_events as f64,
    };
    let mut x = obj.pack(init);
    let (mut f, mut g) = obj.eval(&x);
    if !f.is_finite() {
        return Err(HawkesError::Parameter("initial point has zero likelihood".into()));
    }
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let mut converged = norm(&g) < opts.grad_tol;
    let mut stalled = 0;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push((a, rho));
        }
        let gamma = match (s_hist.last(), y_hist.last()) {
            (Some(s), Some(y)) => dot(s, y) / dot(y, y),
            _ => 1.0 / norm(&g).max(1.0),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y), (a, rho)) in s_hist.iter().zip(&y_hist).zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += si * (a - b));
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // not a descent direction: restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            dir = g.iter().map(|v| -v / norm(&g).max(1.0)).collect();
            slope = dot(&g, &dir);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let (fn_, gn) = obj.eval(&xn);
            if fn_.is_finite() && fn_ <= f + 1e-4 * step * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-16 {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        let improvement = f - fn_;
        x = xn;
        f = fn_;
        g = gn;
        converged = norm(&g) < opts.grad_tol;
        stalled = if improvement.abs() <= 1e-15 * f.abs().max(1.0) { stalled + 1 } else { 0 };
        if stalled >= 5 {
            break;
        }
    }
    let model = obj.unpack(&x);
    Ok(FitResult {
        log_likelihood: -f / obj.scale,
        grad_norm: norm(&g),
        iterations,
        converged,
        model,
    })
}

/// Fit on a single realization.
pub fn fit(events: &[MarkedEvent], horizon: f64, init: &HawkesModel, opts: &FitOptions) -> Result<FitResult, HawkesError> {
    let data = [Realization {
        events: events.to_vec(),
        horizon,
    }];
    fit_many(&data, init, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_d(mu: f64, a: f64, b: f64) -> HawkesModel {
        HawkesModel::new(vec![mu], vec![vec![a]], vec![vec![b]]).unwrap()
    }

    fn ev(t: f64, c: usize) -> MarkedEvent {
        MarkedEvent { t, component: c, size: 0 }
    }

    #[test]
    fn intensity_examples() {
        let m = one_d(1.0, 2.0, 4.0);
        assert_eq!(intensity_at(&m, &[], 3.0), vec![1.0]);
        let l = intensity_at(&m, &[ev(0.0, 0)], 0.25)[0];
        assert!((l - (1.0 + 2.0 * (-1.0f64).exp())).abs() < 1e-12);
        assert!((l - 1.7358).abs() < 1e-4);
        let p = HawkesModel::poisson(vec![1.5, 2.0]).unwrap();
        assert_eq!(intensity_at(&p, &[ev(0.1, 0), ev(0.2, 1)], 0.3), vec![1.5, 2.0]);
    }

    fn random_model(rng: &mut ChaCha8Rng, d: usize) -> HawkesModel {
        let mu = (0..d).map(|_| rng.random_range(0.2..1.0)).collect();
        let beta: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.random_range(1.0..5.0)).collect()).collect();
        let alpha = beta
            .iter()
            .map(|r| r.iter().map(|b| b * rng.random_range(0.0..0.8 / d as f64)).collect())
            .collect();
        HawkesModel::new(mu, alpha, beta).unwrap()
    }

    #[test]
    fn recursion_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model(&mut rng, 3);
        let events = simulate(&m, 300.0, &mut rng).unwrap();
        assert!(events.len() > 200 && events.len() <= 1000, "{}", events.len());
        for k in [1usize, 17, events.len() / 2, events.len() - 1] {
            let t = events[k].t;
            let fast = intensity_at(&m, &events, t);
            let slow = intensity_naive(&m, &events, t);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-10 * b, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn adding_history_never_lowers_intensity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_model(&mut rng, 3);
        let events = simulate(&m, 50.0, &mut rng).unwrap();
        let t = 50.0;
        let base = intensity_at(&m, &events, t);
        let mut more = events.clone();
        more.push(ev(49.0, 1));
        more.sort_by(|a, b| a.t.total_cmp(&b.t));
        for (a, b) in intensity_at(&m, &more, t).iter().zip(&base) {
            assert!(a >= b);
        }
    }

    #[test]
    fn branching_examples() {
        assert_eq!(HawkesModel::poisson(vec![1.0, 1.0]).unwrap().spectral_radius(), 0.0);
        assert!((one_d(1.0, 1.0, 2.0).spectral_radius() - 0.5).abs() < 1e-12);
        let m = HawkesModel::new(
            vec![1.0, 1.0],
            vec![vec![0.2, 0.3], vec![0.3, 0.2]],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        )
        .unwrap();
        assert!((m.spectral_radius() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn poisson_counts() {
        let m = HawkesModel::poisson(vec![2.0, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ev = simulate(&m, 1e4, &mut rng).unwrap();
        for c in 0..2 {
            let n = ev.iter().filter(|e| e.component == c).count() as f64;
            assert!((n - 2e4).abs() < 3.0 * 2e4f64.sqrt(), "component {c}: {n}");
        }
    }

    #[test]
    fn self_exciting_mean_rate() {
        let m = one_d(1.0, 1.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ev = simulate(&m, 2e4, &mut rng).unwrap();
        let rate = ev.len() as f64 / 2e4;
        assert!((rate - 2.0).abs() < 0.1, "rate {rate}");
        assert!((m.stationary_rates().unwrap()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn explosive_model_is_rejected() {
        let m = one_d(1.0, 3.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(matches!(simulate(&m, 10.0, &mut rng), Err(HawkesError::NonStationary(_))));
    }

    #[test]
    fn poisson_likelihood_by_hand() {
        let m = HawkesModel::new(vec![1.0], vec![vec![0.0]], vec![vec![1.0]]).unwrap();
        let (ll, _) = log_likelihood(&m, &[ev(0.5, 0)], 1.0);
        assert!((ll + 1.0).abs() < 1e-15);
    }

    #[test]
    fn time_rescaling_shifts_likelihood_by_log_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_model(&mut rng, 2);
        let events = simulate(&m, 200.0, &mut rng).unwrap();
        let c = 3.0;
        let scaled: Vec<MarkedEvent> = events.iter().map(|e| ev(e.t * c, e.component)).collect();
        let ms = HawkesModel::new(
            m.mu.iter().map(|v| v / c).collect(),
            m.alpha.iter().map(|r| r.iter().map(|v| v / c).collect()).collect(),
            m.beta.iter().map(|r| r.iter().map(|v| v / c).collect()).collect(),
        )
        .unwrap();
        let (a, _) = log_likelihood(&m, &events, 200.0);
        let (b, _) = log_likelihood(&ms, &scaled, 200.0 * c);
        assert!((b - (a - events.len() as f64 * c.ln())).abs() < 1e-8 * a.abs());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let m = random_model(&mut rng, 2);
            let events = simulate(&m, 100.0, &mut rng).unwrap();
            let (_, g) = log_likelihood(&m, &events, 100.0);
            let fd = |f: &dyn Fn(&mut HawkesModel, f64)| {
                let h = 1e-6;
                let mut p = m.clone();
                let mut q = m.clone();
                f(&mut p, h);
                f(&mut q, -h);
                (log_likelihood(&p, &events, 100.0).0 - log_likelihood(&q, &events, 100.0).0) / (2.0 * h)
            };
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1.0);
            for i in 0..2 {
                let d = fd(&|p: &mut HawkesModel, h| p.mu[i] += h);
                assert!(close(g.mu[i], d), "mu {i}: {} vs {d}", g.mu[i]);
                for j in 0..2 {
                    let d = fd(&|p: &mut HawkesModel, h| p.alpha[i][j] += h);
                    assert!(close(g.alpha[i][j], d), "alpha {i}{j}: {} vs {d}", g.alpha[i][j]);
                    let d = fd(&|p: &mut HawkesModel, h| p.beta[i][j] += h);
                    assert!(close(g.beta[i][j], d), "beta {i}{j}: {} vs {d}", g.beta[i][j]);
                }
            }
        }
    }

    #[test]
    fn poisson_fit_finds_no_excitation() {
        let truth = HawkesModel::poisson(vec![1.0, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let events = simulate(&truth, 5_000.0, &mut rng).unwrap();
        let data = [Realization {
            events: events.clone(),
            horizon: 5_000.0,
        }];
        let init = initial_guess(2, &data).unwrap();
        let r = fit(&events, 5_000.0, &init, &FitOptions::default()).unwrap();
        let (a, _) = r.model.branching_matrix();
        assert!(a.iter().all(|&x| x < 0.02), "branching {a}");
        for i in 0..2 {
            assert!((r.model.mu[i] / truth.mu[i] - 1.0).abs() < 0.05, "mu {:?}", r.model.mu);
        }
    }

    #[test]
    fn fit_from_truth_stays_put() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let truth = random_model(&mut rng, 2);
        let events = simulate(&truth, 2_000.0, &mut rng).unwrap();
        let first = fit(&events, 2_000.0, &truth, &FitOptions::default()).unwrap();
        let again = fit(&events, 2_000.0, &first.model, &FitOptions::default()).unwrap();
        assert!(again.iterations <= 5, "{} iterations", again.iterations);
        assert!((again.log_likelihood - first.log_likelihood).abs() < 1e-6 * first.log_likelihood.abs());
    }

    #[test]
    fn shared_beta_fit_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let truth = HawkesModel::new(
            vec![0.5, 0.5],
            vec![vec![1.0, 0.5], vec![0.5, 1.0]],
            vec![vec![3.0, 3.0], vec![3.0, 3.0]],
        )
        .unwrap();
        let events = simulate(&truth, 2_000.0, &mut rng).unwrap();
        let init = initial_guess(2, &[Realization { events: events.clone(), horizon: 2_000.0 }]).unwrap();
        let opts = FitOptions {
            shared_beta: true,
            ..Default::default()
        };
        let r = fit(&events, 2_000.0, &init, &opts).unwrap();
        let b = r.model.beta[0][0];
        assert!(r.model.beta.iter().flatten().all(|&x| x == b));
        assert!((b / 3.0 - 1.0).abs() < 0.3, "beta {b}");
    }

    #[test]
    fn residuals_of_true_model_are_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_model(&mut rng, 2);
        let events = simulate(&m, 5_000.0, &mut rng).unwrap();
        let res = time_rescaled_residuals(&m, &events);
        let (_, p) = residual_ks(&res);
        assert!(p > 0.01, "p = {p}");
        // a wrong model is caught
        let wrong = HawkesModel::poisson(m.mu.clone()).unwrap();
        let (_, p_wrong) = residual_ks(&time_rescaled_residuals(&wrong, &events));
        assert!(p_wrong < 0.01);
    }

    #[test]
    fn component_layout() {
        assert_eq!(component_of(EventType::Limit, Side::Bid), 0);
        assert_eq!(component_of(EventType::MarketAll, Side::Ask), 5);
        for c in 0..6 {
            let (eta, side) = component_meaning(c);
            assert_eq!(component_of(eta, side), c);
        }
    }
}
