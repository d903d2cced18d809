//! Gaussian-process surrogate of sensed data over position, with expected
//! improvement used to pick the next waypoint.
//!
//! The GP is unit-agnostic: the trainer feeds it positions scaled to the unit
//! square and values in Mbit, so the default length scale and signal variance
//! are meaningful.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::world::Position;

/// Number of decade escalations of the diagonal jitter before giving up.
pub const MAX_JITTER_ESCALATIONS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub pos: Position,
    pub value: f64,
}

/// Most recent samples, oldest first, capped at `window`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleHistory {
    window: usize,
    samples: VecDeque<Sample>,
}

impl SampleHistory {
    pub fn new(window: usize) -> Self {
        Self { window: window.max(1), samples: VecDeque::with_capacity(window.max(1)) }
    }

    /// Appends a sample, evicting the oldest one when full. Negative values
    /// are stored as zero.
    pub fn push(&mut self, pos: Position, value: f64) {
        if self.samples.len() == self.window {
            self.samples.pop_front();
        }
        self.samples.push_back(Sample { pos, value: value.max(0.0) });
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = &Sample> + '_ {
        self.samples.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpConfig {
    pub length_scale: f64,
    pub signal_var: f64,
    /// Variance added to the kernel diagonal.
    pub noise_jitter: f64,
    pub prior_mean: f64,
    /// History window in samples.
    pub window: usize,
    pub n_dir: usize,
    pub n_rad: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            length_scale: 0.3,
            signal_var: 1.0,
            noise_jitter: 1e-6,
            prior_mean: 0.0,
            window: 50,
            n_dir: 16,
            n_rad: 4,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0) || !(self.signal_var > 0.0) || !(self.noise_jitter > 0.0) {
            return Err(Error::Config("gp length_scale, signal_var and noise_jitter must be positive".into()));
        }
        if self.window == 0 || self.n_dir == 0 || self.n_rad == 0 {
            return Err(Error::Config("gp window and candidate grid must be non-empty".into()));
        }
        Ok(())
    }
}

/// Covariance function over positions.
pub trait Kernel {
    fn cov(&self, p: Position, q: Position) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredExponential {
    pub length_scale: f64,
    pub signal_var: f64,
}

impl SquaredExponential {
    pub fn from_config(cfg: &GpConfig) -> Self {
        Self { length_scale: cfg.length_scale, signal_var: cfg.signal_var }
    }
}

impl Kernel for SquaredExponential {
    fn cov(&self, p: Position, q: Position) -> f64 {
        let (dx, dy, dz) = (p.x - q.x, p.y - q.y, p.z - q.z);
        let r2 = dx * dx + dy * dy + dz * dz;
        self.signal_var * math::exp(-0.5 * r2 / (self.length_scale * self.length_scale))
    }
}

/// `signal_var * exp(-|p - q|^2 / (2 length_scale^2))`.
pub fn kernel(p: Position, q: Position, cfg: &GpConfig) -> f64 {
    SquaredExponential::from_config(cfg).cov(p, q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub mean: f64,
    pub var: f64,
}

impl Posterior {
    pub fn std_dev(&self) -> f64 {
        math::sqrt(self.var.max(0.0))
    }
}

/// In-place lower Cholesky factor of a row-major `n x n` matrix.
/// Returns false if a pivot is not strictly positive.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = math::sqrt(d);
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    true
}

/// Solves `L x = b` in place.
fn forward_sub(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `L^T x = b` in place.
fn backward_sub(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// A GP conditioned on a history snapshot.
#[derive(Debug, Clone)]
pub struct GpModel<K = SquaredExponential> {
    kernel: K,
    prior_mean: f64,
    points: Vec<Position>,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    /// Diagonal jitter that made the factorization succeed.
    pub jitter: f64,
}

impl GpModel<SquaredExponential> {
    pub fn fit(h: &SampleHistory, cfg: &GpConfig) -> Result<Self> {
        Self::fit_with(SquaredExponential::from_config(cfg), h, cfg)
    }
}

impl<K: Kernel> GpModel<K> {
    /// Factorizes `K + jitter I`, raising the jitter by a decade whenever the
    /// factorization fails.
    pub fn fit_with(kernel: K, h: &SampleHistory, cfg: &GpConfig) -> Result<Self> {
        let points: Vec<Position> = h.iter().map(|s| s.pos).collect();
        let n = points.len();
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let c = kernel.cov(points[i], points[j]);
                gram[i * n + j] = c;
                gram[j * n + i] = c;
            }
        }
        let mut jitter = cfg.noise_jitter;
        let mut escalations = 0;
        let chol = loop {
            let mut a = gram.clone();
            for i in 0..n {
                a[i * n + i] += jitter;
            }
            if cholesky(&mut a, n) {
                break a;
            }
            if escalations == MAX_JITTER_ESCALATIONS {
                return Err(Error::NotPositiveDefinite(jitter));
            }
            escalations += 1;
            jitter *= 10.0;
        };
        let mut alpha: Vec<f64> = h.iter().map(|s| s.value - cfg.prior_mean).collect();
        forward_sub(&chol, n, &mut alpha);
        backward_sub(&chol, n, &mut alpha);
        Ok(Self { kernel, prior_mean: cfg.prior_mean, points, chol, alpha, jitter })
    }

    pub fn predict(&self, query: Position) -> Posterior {
        let n = self.points.len();
        let prior_var = self.kernel.cov(query, query);
        if n == 0 {
            return Posterior { mean: self.prior_mean, var: prior_var };
        }
        let mut k: Vec<f64> = self.points.iter().map(|&p| self.kernel.cov(p, query)).collect();
        let mean = self.prior_mean + k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        forward_sub(&self.chol, n, &mut k);
        let var = prior_var - k.iter().map(|v| v * v).sum::<f64>();
        Posterior { mean, var: var.max(0.0) }
    }
}

/// Predictive mean and variance at `query`.
pub fn posterior(h: &SampleHistory, query: Position, cfg: &GpConfig) -> Result<Posterior> {
    Ok(GpModel::fit(h, cfg)?.predict(query))
}

/// Largest stored value, zero for an empty history.
pub fn best_observed(h: &SampleHistory) -> f64 {
    h.iter().map(|s| s.value).fold(0.0, f64::max)
}

/// `E[max(0, f - f_star)]` for `f ~ N(mean, var)`.
pub fn expected_improvement(p: Posterior, f_star: f64) -> f64 {
    let gain = p.mean - f_star;
    let sigma = p.std_dev();
    if sigma <= 0.0 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    (gain * math::normal_cdf(z) + sigma * math::normal_pdf(z)).max(0.0)
}

/// Stay-put followed by `n_rad` rings of `n_dir` points out to `reach`,
/// innermost ring first, clipped to `[-bound, bound]` on x and y.
pub fn candidates(current: Position, reach: f64, bound: f64, cfg: &GpConfig) -> Vec<Position> {
    let mut out = Vec::with_capacity(1 + cfg.n_dir * cfg.n_rad);
    out.push(current);
    for r in 1..=cfg.n_rad {
        let radius = reach * r as f64 / cfg.n_rad as f64;
        for d in 0..cfg.n_dir {
            let angle = 2.0 * PI * d as f64 / cfg.n_dir as f64;
            out.push(Position {
                x: (current.x + radius * math::cos(angle)).clamp(-bound, bound),
                y: (current.y + radius * math::sin(angle)).clamp(-bound, bound),
                z: current.z,
            });
        }
    }
    out
}

/// Candidate with the largest expected improvement; ties go to the earliest.
pub fn propose_point(h: &SampleHistory, current: Position, reach: f64, bound: f64, cfg: &GpConfig) -> Result<Position> {
    let model = GpModel::fit(h, cfg)?;
    let f_star = best_observed(h);
    let mut best = (current, f64::NEG_INFINITY);
    for c in candidates(current, reach, bound, cfg) {
        let ei = expected_improvement(model.predict(c), f_star);
        if ei > best.1 {
            best = (c, ei);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::distance;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pt(x: f64, y: f64) -> Position {
        Position::new(x, y, 0.0)
    }

    fn history(samples: &[(f64, f64, f64)]) -> SampleHistory {
        let mut h = SampleHistory::new(50);
        for &(x, y, v) in samples {
            h.push(pt(x, y), v);
        }
        h
    }

    #[test]
    fn kernel_cases() {
        let cfg = GpConfig { signal_var: 2.0, ..GpConfig::default() };
        let p = pt(0.1, -0.2);
        assert_eq!(kernel(p, p, &cfg), 2.0);
        let l = cfg.length_scale;
        let q = pt(0.1 + l, -0.2 + l);
        assert_relative_eq!(kernel(p, q, &cfg), 2.0 * (-1.0f64).exp(), max_relative = 1e-14);
        assert_eq!(kernel(p, pt(1e6, 0.0), &cfg), 0.0);
    }

    #[test]
    fn empty_history_is_prior() {
        let cfg = GpConfig::default();
        let post = posterior(&SampleHistory::new(5), pt(0.3, 0.3), &cfg).unwrap();
        assert_eq!(post, Posterior { mean: 0.0, var: 1.0 });
    }

    #[test]
    fn interpolates_stored_point() {
        let cfg = GpConfig { noise_jitter: 1e-12, ..GpConfig::default() };
        let h = history(&[(0.0, 0.0, 3.0), (0.5, 0.5, 1.0)]);
        let post = posterior(&h, pt(0.0, 0.0), &cfg).unwrap();
        assert_relative_eq!(post.mean, 3.0, epsilon = 1e-9);
        assert!(post.var < 1e-9);
    }

    #[test]
    fn two_sample_closed_form() {
        let cfg = GpConfig::default();
        let (a, b, q) = (pt(0.1, 0.2), pt(-0.3, 0.25), pt(0.05, -0.1));
        let (ya, yb) = (2.0, 0.5);
        let h = history(&[(a.x, a.y, ya), (b.x, b.y, yb)]);
        let k = |p, r| kernel(p, r, &cfg);
        let (k11, k22, k12) = (k(a, a) + cfg.noise_jitter, k(b, b) + cfg.noise_jitter, k(a, b));
        let det = k11 * k22 - k12 * k12;
        let inv = [k22 / det, -k12 / det, -k12 / det, k11 / det];
        let ks = [k(a, q), k(b, q)];
        let w = [inv[0] * ks[0] + inv[1] * ks[1], inv[2] * ks[0] + inv[3] * ks[1]];
        let mean = w[0] * ya + w[1] * yb;
        let var = k(q, q) - (w[0] * ks[0] + w[1] * ks[1]);
        let post = posterior(&h, q, &cfg).unwrap();
        assert_relative_eq!(post.mean, mean, max_relative = 1e-8);
        assert_relative_eq!(post.var, var, max_relative = 1e-8);
    }

    #[test]
    fn duplicate_points_escalate_jitter() {
        let cfg = GpConfig { noise_jitter: 1e-300, ..GpConfig::default() };
        let h = history(&[(0.0, 0.0, 1.0), (0.0, 0.0, 1.0)]);
        assert!(matches!(GpModel::fit(&h, &cfg), Err(Error::NotPositiveDefinite(_))));
        let cfg = GpConfig { noise_jitter: 1e-17, ..GpConfig::default() };
        let model = GpModel::fit(&h, &cfg).unwrap();
        assert!(model.jitter > 1e-17);
        assert_relative_eq!(model.predict(pt(0.0, 0.0)).mean, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn best_observed_cases() {
        assert_eq!(best_observed(&SampleHistory::new(3)), 0.0);
        assert_eq!(best_observed(&history(&[(0.0, 0.0, 5.0)])), 5.0);
        assert_eq!(best_observed(&history(&[(0.0, 0.0, 1.0), (0.1, 0.0, 7.0), (0.2, 0.0, 3.0)])), 7.0);
    }

    #[test]
    fn window_drops_oldest() {
        let mut h = SampleHistory::new(3);
        for i in 0..4 {
            h.push(pt(i as f64, 0.0), i as f64);
        }
        assert_eq!(h.len(), 3);
        assert!(h.iter().all(|s| s.pos.x != 0.0));
        assert_eq!(h.iter().next().unwrap().value, 1.0);
    }

    #[test]
    fn ei_cases() {
        assert_eq!(expected_improvement(Posterior { mean: 1.0, var: 0.0 }, 1.0), 0.0);
        assert_eq!(expected_improvement(Posterior { mean: 3.0, var: 0.0 }, 1.0), 2.0);
        let ei = expected_improvement(Posterior { mean: 1.0, var: 1.0 }, 0.0);
        assert_relative_eq!(ei, 1.0833154705876864, max_relative = 1e-12);
    }

    #[test]
    fn empty_history_stays_put() {
        let cfg = GpConfig::default();
        let here = pt(0.2, 0.2);
        assert_eq!(propose_point(&SampleHistory::new(5), here, 0.006, 1.0, &cfg).unwrap(), here);
    }

    #[test]
    fn low_sample_pushes_proposal_away() {
        let cfg = GpConfig::default();
        let here = pt(0.0, 0.0);
        let h = history(&[(0.0, 0.0, 0.1)]);
        let reach = 0.1;
        let next = propose_point(&h, here, reach, 1.0, &cfg).unwrap();
        assert_relative_eq!(distance(next, here), reach, max_relative = 1e-9);
    }

    #[test]
    fn candidates_are_clipped_and_within_reach() {
        let cfg = GpConfig::default();
        let here = pt(0.999, -0.999);
        let cs = candidates(here, 0.01, 1.0, &cfg);
        assert_eq!(cs.len(), 65);
        for c in cs {
            assert!(c.x.abs() <= 1.0 && c.y.abs() <= 1.0);
            assert!(distance(c, here) <= 0.01 + 1e-12);
        }
    }

    fn arb_history() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64, 0.0..5.0f64), 0..8)
    }

    proptest! {
        #[test]
        fn variance_bounded(samples in arb_history(), qx in -1.0..1.0f64, qy in -1.0..1.0f64) {
            let cfg = GpConfig::default();
            let post = posterior(&history(&samples), pt(qx, qy), &cfg).unwrap();
            prop_assert!(post.var >= 0.0);
            prop_assert!(post.var <= cfg.signal_var + cfg.noise_jitter);
        }

        #[test]
        fn new_sample_never_raises_own_variance(samples in arb_history(), x in -1.0..1.0f64, y in -1.0..1.0f64, v in 0.0..5.0f64) {
            let cfg = GpConfig { noise_jitter: 1e-4, ..GpConfig::default() };
            let mut h = history(&samples);
            let before = posterior(&h, pt(x, y), &cfg).unwrap().var;
            h.push(pt(x, y), v);
            let after = posterior(&h, pt(x, y), &cfg).unwrap().var;
            prop_assert!(after <= before + 1e-12);
        }

        #[test]
        fn ei_nonnegative_and_monotone(mu in -3.0..3.0f64, f in -3.0..3.0f64, s1 in 0.0..3.0f64, s2 in 0.0..3.0f64) {
            let a = expected_improvement(Posterior { mean: mu, var: s1 * s1 }, f);
            prop_assert!(a >= 0.0);
            if mu <= f {
                let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
                let e_lo = expected_improvement(Posterior { mean: mu, var: lo * lo }, f);
                let e_hi = expected_improvement(Posterior { mean: mu, var: hi * hi }, f);
                prop_assert!(e_hi + 1e-15 >= e_lo);
            }
        }

        #[test]
        fn proposal_within_reach(samples in arb_history(), x in -1.0..1.0f64, y in -1.0..1.0f64, reach in 0.001..0.5f64) {
            let here = pt(x, y);
            let next = propose_point(&history(&samples), here, reach, 1.0, &GpConfig::default()).unwrap();
            prop_assert!(distance(next, here) <= reach + 1e-12);
        }
    }
}
