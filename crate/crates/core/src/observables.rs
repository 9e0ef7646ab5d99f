//! Observables: a real test function `phi(k)` in k-space together with its
//! Fourier transform `alpha(x) = int exp(i x.k) phi(k) dk` in x-space.
//!
//! The norms need `||d^k alpha(x)||`, the operator norm of the k-th
//! differential. For symmetric multilinear forms this equals the supremum of
//! `|d^k alpha(x)[v, ..., v]|` over unit `v`, which the Gaussian evaluates in
//! closed form through Hermite polynomials. Other observables fall back to
//! [`numeric_derivative_norm`], which only certifies a lower bound.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointset::PointSet;

pub trait Observable: Send + Sync + Debug {
    fn dim(&self) -> usize;

    /// `phi(k)`; for observables whose k-space form carries a point mass,
    /// only the regular part.
    fn eval_k(&self, k: &[f64]) -> f64;

    /// `alpha(x)`.
    fn eval_x(&self, x: &[f64]) -> Complex64;

    /// Closed-form `||d^order alpha(x)||`, if known.
    fn deriv_norm(&self, _x: &[f64], _order: usize) -> Option<f64> {
        None
    }

    /// Radius beyond which `||d^k alpha||` (k up to `dim + 2`) stays below
    /// `tol`, ignoring any constant offset.
    fn tail_radius(&self, tol: f64) -> f64;

    /// Centre and radius of a k-space window outside which `phi < tol`.
    fn k_window(&self, _tol: f64) -> Option<(Vec<f64>, f64)> {
        None
    }

    fn is_analytic(&self) -> bool {
        false
    }

    /// `alpha` is real valued.
    fn is_real(&self) -> bool {
        false
    }

    /// `alpha(-x) = conj(alpha(x))` (true whenever `phi` is real).
    fn is_hermitian(&self) -> bool {
        false
    }

    /// `||d^k alpha(x)||` depends on `|x|` only.
    fn is_radial(&self) -> bool {
        false
    }

    /// Radii where the radial derivative-norm profile may have kinks.
    fn radial_breakpoints(&self, _order: usize) -> Vec<f64> {
        Vec::new()
    }

    /// Exact `sup |alpha(c + z) - alpha(c + z')|` over `|z|, |z'| <= radius`.
    fn ball_oscillation(&self, _center: &[f64], _radius: f64) -> Option<f64> {
        None
    }

    /// Constant added to an otherwise decaying `alpha`.
    fn constant_offset(&self) -> Complex64 {
        Complex64::new(0.0, 0.0)
    }
}

pub type SharedObservable = Arc<dyn Observable>;

// ---- Hermite polynomials ----------------------------------------------------

/// Probabilists' Hermite polynomial `He_k(s)`.
pub fn hermite_he(k: usize, s: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, s);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let next = s * cur - j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Roots of `He_m` in increasing order, by interlacing with the roots of
/// `He_{m-1}` and bisection.
pub fn hermite_roots(m: usize) -> Vec<f64> {
    let mut roots: Vec<f64> = Vec::new();
    for deg in 1..=m {
        let bound = (4.0 * deg as f64 + 2.0).sqrt() + 1.0;
        let mut brackets = vec![-bound];
        brackets.extend(roots.iter().copied());
        brackets.push(bound);
        roots = brackets
            .windows(2)
            .map(|w| {
                let (mut lo, mut hi) = (w[0], w[1]);
                let flo = hermite_he(deg, lo);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if (hermite_he(deg, mid) > 0.0) == (flo > 0.0) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect();
    }
    roots
}

// ---- Gaussian -----------------------------------------------------------------

/// `phi(k) = (2 pi sigma^2)^(-dim/2) exp(-|k - k0|^2 / (2 sigma^2))` with
/// transform `alpha(x) = exp(i k0.x) exp(-sigma^2 |x|^2 / 2)`.
#[derive(Debug, Clone)]
pub struct GaussianObservable {
    dim: usize,
    sigma: f64,
    center: Vec<f64>,
    /// Non-negative roots of `He_{k-1}` for each order `k`.
    critical: Vec<Vec<f64>>,
}

const MAX_CACHED_ORDER: usize = 8;

impl GaussianObservable {
    pub fn new(dim: usize, sigma: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        let critical = (0..=MAX_CACHED_ORDER).map(nonneg_critical_points).collect();
        Ok(GaussianObservable {
            dim,
            sigma,
            center: vec![0.0; dim],
            critical,
        })
    }

    /// Shifts `phi` to be centred at `k0`, making `alpha` a modulated Gaussian.
    pub fn with_center(mut self, k0: Vec<f64>) -> Result<Self> {
        if k0.len() != self.dim {
            return Err(Error::invalid("centre has the wrong dimension"));
        }
        self.center = k0;
        Ok(self)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn centered(&self) -> bool {
        self.center.iter().all(|&c| c == 0.0)
    }

    fn profile(&self, r: f64) -> f64 {
        (-0.5 * self.sigma * self.sigma * r * r).exp()
    }

    fn max_abs_he_upto(&self, order: usize, s_max: f64) -> f64 {
        let mut best = hermite_he(order, s_max).abs();
        let owned;
        let crit = match self.critical.get(order) {
            Some(c) => c,
            None => {
                owned = nonneg_critical_points(order);
                &owned
            }
        };
        for &c in crit.iter().filter(|&&c| c <= s_max) {
            best = best.max(hermite_he(order, c).abs());
        }
        best
    }
}

fn nonneg_critical_points(order: usize) -> Vec<f64> {
    if order < 2 {
        return Vec::new();
    }
    hermite_roots(order - 1).into_iter().filter(|&r| r >= 0.0).collect()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

impl Observable for GaussianObservable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_k(&self, k: &[f64]) -> f64 {
        let s2 = self.sigma * self.sigma;
        let r2: f64 = k.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        (2.0 * PI * s2).powf(-(self.dim as f64) / 2.0) * (-r2 / (2.0 * s2)).exp()
    }

    fn eval_x(&self, x: &[f64]) -> Complex64 {
        // from the scaled vector, so that alpha_sigma(x) = alpha_1(sigma x) exactly
        let r2: f64 = x.iter().map(|c| (self.sigma * c) * (self.sigma * c)).sum();
        let env = (-0.5 * r2).exp();
        if self.centered() {
            return Complex64::new(env, 0.0);
        }
        let phase: f64 = x.iter().zip(&self.center).map(|(a, b)| a * b).sum();
        Complex64::from_polar(env, phase)
    }

    fn deriv_norm(&self, x: &[f64], order: usize) -> Option<f64> {
        if !self.centered() {
            return None;
        }
        let r = norm(x);
        let env = self.profile(r);
        if order == 0 {
            return Some(env);
        }
        let s = self.sigma * r;
        // along a unit direction v the k-th derivative is
        // (-sigma)^k He_k(sigma x.v) alpha(x); in one dimension v = +-1,
        // otherwise x.v sweeps [-|x|, |x|]
        let he = if self.dim == 1 {
            hermite_he(order, s).abs()
        } else {
            self.max_abs_he_upto(order, s)
        };
        Some(self.sigma.powi(order as i32) * he * env)
    }

    fn tail_radius(&self, tol: f64) -> f64 {
        let tol = tol.max(1e-300);
        let max_order = self.dim + 2;
        let mut last_bad: f64 = 0.0;
        let mut s: f64 = 0.0;
        while s < 80.0 {
            let env = (-0.5 * s * s).exp();
            let poly_r = (s / self.sigma).max(1.0).powi(self.dim as i32 - 1);
            let bad = (0..=max_order).any(|k| {
                self.sigma.powi(k as i32) * hermite_he(k, s).abs().max(1.0) * env * poly_r > tol
            });
            if bad {
                last_bad = s;
            }
            s += 0.05;
        }
        (last_bad + 0.5) / self.sigma
    }

    fn k_window(&self, tol: f64) -> Option<(Vec<f64>, f64)> {
        let s2 = self.sigma * self.sigma;
        let c = (2.0 * PI * s2).powf(-(self.dim as f64) / 2.0);
        let r = if c <= tol {
            self.sigma
        } else {
            self.sigma * (2.0 * (c / tol).ln()).sqrt()
        };
        Some((self.center.clone(), r))
    }

    fn is_analytic(&self) -> bool {
        self.centered()
    }

    fn is_real(&self) -> bool {
        self.centered()
    }

    fn is_hermitian(&self) -> bool {
        true
    }

    fn is_radial(&self) -> bool {
        self.centered()
    }

    fn radial_breakpoints(&self, order: usize) -> Vec<f64> {
        if order == 0 {
            return Vec::new();
        }
        let mut pts: Vec<f64> = hermite_roots(order)
            .into_iter()
            .chain(hermite_roots(order - 1))
            .filter(|&r| r > 0.0)
            .map(|r| r / self.sigma)
            .collect();
        pts.sort_by(f64::total_cmp);
        pts
    }

    fn ball_oscillation(&self, center: &[f64], radius: f64) -> Option<f64> {
        if !self.centered() {
            return None;
        }
        // radially decreasing: extremes at the nearest and farthest points
        let r = norm(center);
        Some(self.profile((r - radius).max(0.0)) - self.profile(r + radius))
    }
}

// ---- wrappers -------------------------------------------------------------------

/// `c * alpha` for a real factor `c`.
#[derive(Debug, Clone)]
pub struct Scaled {
    inner: SharedObservable,
    factor: f64,
}

impl Scaled {
    pub fn new(inner: SharedObservable, factor: f64) -> Self {
        Scaled { inner, factor }
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }
}

impl Observable for Scaled {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval_k(&self, k: &[f64]) -> f64 {
        self.factor * self.inner.eval_k(k)
    }
    fn eval_x(&self, x: &[f64]) -> Complex64 {
        self.inner.eval_x(x) * self.factor
    }
    fn deriv_norm(&self, x: &[f64], order: usize) -> Option<f64> {
        self.inner.deriv_norm(x, order).map(|v| v * self.factor.abs())
    }
    fn tail_radius(&self, tol: f64) -> f64 {
        if self.factor == 0.0 {
            return 0.0;
        }
        self.inner.tail_radius(tol / self.factor.abs())
    }
    fn k_window(&self, tol: f64) -> Option<(Vec<f64>, f64)> {
        if self.factor == 0.0 {
            return self.inner.k_window(tol);
        }
        self.inner.k_window(tol / self.factor.abs())
    }
    fn is_analytic(&self) -> bool {
        self.inner.is_analytic()
    }
    fn is_real(&self) -> bool {
        self.inner.is_real()
    }
    fn is_hermitian(&self) -> bool {
        self.inner.is_hermitian()
    }
    fn is_radial(&self) -> bool {
        self.inner.is_radial()
    }
    fn radial_breakpoints(&self, order: usize) -> Vec<f64> {
        self.inner.radial_breakpoints(order)
    }
    fn ball_oscillation(&self, center: &[f64], radius: f64) -> Option<f64> {
        self.inner
            .ball_oscillation(center, radius)
            .map(|v| v * self.factor.abs())
    }
    fn constant_offset(&self) -> Complex64 {
        self.inner.constant_offset() * self.factor
    }
}

/// `alpha + c`.
#[derive(Debug, Clone)]
pub struct Shifted {
    inner: SharedObservable,
    offset: Complex64,
}

impl Shifted {
    pub fn new(inner: SharedObservable, offset: Complex64) -> Self {
        Shifted { inner, offset }
    }
}

impl Observable for Shifted {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval_k(&self, k: &[f64]) -> f64 {
        self.inner.eval_k(k)
    }
    fn eval_x(&self, x: &[f64]) -> Complex64 {
        self.inner.eval_x(x) + self.offset
    }
    fn deriv_norm(&self, x: &[f64], order: usize) -> Option<f64> {
        if order == 0 {
            Some(self.eval_x(x).norm())
        } else {
            self.inner.deriv_norm(x, order)
        }
    }
    fn tail_radius(&self, tol: f64) -> f64 {
        self.inner.tail_radius(tol)
    }
    fn is_analytic(&self) -> bool {
        self.inner.is_analytic()
    }
    fn is_real(&self) -> bool {
        self.inner.is_real() && self.offset.im == 0.0
    }
    fn is_hermitian(&self) -> bool {
        self.inner.is_hermitian() && self.offset.im == 0.0
    }
    fn is_radial(&self) -> bool {
        self.inner.is_radial()
    }
    fn radial_breakpoints(&self, order: usize) -> Vec<f64> {
        self.inner.radial_breakpoints(order)
    }
    fn ball_oscillation(&self, center: &[f64], radius: f64) -> Option<f64> {
        self.inner.ball_oscillation(center, radius)
    }
    fn constant_offset(&self) -> Complex64 {
        self.inner.constant_offset() + self.offset
    }
}

/// `alpha(x) = c` everywhere (a point mass at `k = 0` in k-space).
#[derive(Debug, Clone)]
pub struct Constant {
    dim: usize,
    value: Complex64,
}

impl Constant {
    pub fn new(dim: usize, value: Complex64) -> Self {
        Constant { dim, value }
    }
}

impl Observable for Constant {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval_k(&self, _k: &[f64]) -> f64 {
        0.0
    }
    fn eval_x(&self, _x: &[f64]) -> Complex64 {
        self.value
    }
    fn deriv_norm(&self, _x: &[f64], order: usize) -> Option<f64> {
        Some(if order == 0 { self.value.norm() } else { 0.0 })
    }
    fn tail_radius(&self, _tol: f64) -> f64 {
        0.0
    }
    fn is_analytic(&self) -> bool {
        true
    }
    fn is_real(&self) -> bool {
        self.value.im == 0.0
    }
    fn is_hermitian(&self) -> bool {
        self.value.im == 0.0
    }
    fn is_radial(&self) -> bool {
        true
    }
    fn ball_oscillation(&self, _center: &[f64], _radius: f64) -> Option<f64> {
        Some(0.0)
    }
    fn constant_offset(&self) -> Complex64 {
        self.value
    }
}

/// Shorthand for the built-in Gaussian.
pub fn gaussian(dim: usize, sigma: f64) -> Result<SharedObservable> {
    Ok(Arc::new(GaussianObservable::new(dim, sigma)?))
}

/// Configuration form: `{"type":"gaussian","sigma":s}` (optionally with a
/// k-space `center`).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableConfig {
    Gaussian {
        sigma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
}

impl ObservableConfig {
    pub fn build(&self, dim: usize) -> Result<SharedObservable> {
        match self {
            ObservableConfig::Gaussian { sigma, center } => {
                let g = GaussianObservable::new(dim, *sigma)?;
                Ok(match center {
                    Some(c) => Arc::new(g.with_center(c.clone())?),
                    None => Arc::new(g),
                })
            }
        }
    }
}

// ---- numerics ---------------------------------------------------------------------

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Central difference `delta_h^k` along `v` divided by `h^k` (second order).
fn central_difference(obs: &dyn Observable, x: &[f64], v: &[f64], order: usize, h: f64) -> Complex64 {
    let mut buf = vec![0.0; x.len()];
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..=order {
        let t = (order as f64 / 2.0 - j as f64) * h;
        for ((b, xi), vi) in buf.iter_mut().zip(x).zip(v) {
            *b = xi + t * vi;
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += obs.eval_x(&buf) * (sign * binomial(order, j));
    }
    acc / h.powi(order as i32)
}

/// Richardson-extrapolated directional derivative and the change between
/// two step halvings.
fn directional(obs: &dyn Observable, x: &[f64], v: &[f64], order: usize, h: f64) -> (f64, f64) {
    let d1 = central_difference(obs, x, v, order, h);
    let d2 = central_difference(obs, x, v, order, h / 2.0);
    let d4 = central_difference(obs, x, v, order, h / 4.0);
    let r1 = (d2 * 4.0 - d1) / 3.0;
    let r2 = (d4 * 4.0 - d2) / 3.0;
    (r2.norm(), (r2 - r1).norm())
}

/// `2 dim` axis directions followed by `64 dim` low-discrepancy unit vectors.
pub fn direction_grid(dim: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; dim];
            v[i] = s;
            dirs.push(v);
        }
    }
    if dim == 1 {
        return dirs;
    }
    let extra = 64 * dim;
    if dim == 2 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for j in 1..=extra {
            let th = 2.0 * PI * (j as f64 * g).fract();
            dirs.push(vec![th.cos(), th.sin()]);
        }
        return dirs;
    }
    // generalized golden ratio: unique positive root of x^(d+1) = x + 1
    let mut phi = 2.0f64;
    for _ in 0..100 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=dim).map(|i| phi.powi(-(i as i32)).fract()).collect();
    let mut j = 1usize;
    while dirs.len() < 2 * dim + extra {
        let v: Vec<f64> = alphas
            .iter()
            .map(|a| 2.0 * (0.5 + a * j as f64).fract() - 1.0)
            .collect();
        j += 1;
        let n = norm(&v);
        if n > 0.1 && n <= 1.0 {
            dirs.push(v.iter().map(|c| c / n).collect());
        }
    }
    dirs
}

/// Finite-difference estimate of `||d^order alpha(x)||`: supremum over the
/// [`direction_grid`] (refined by golden-section search in two dimensions)
/// of Richardson-extrapolated central differences with base step `h`.
/// Fails when step halving moves the estimate by more than `tol`.
pub fn numeric_derivative_norm(obs: &dyn Observable, x: &[f64], order: usize, h: f64, tol: f64) -> Result<f64> {
    let dim = obs.dim();
    if x.len() != dim {
        return Err(Error::invalid("point has the wrong dimension"));
    }
    if order > dim + 1 {
        return Err(Error::invalid(format!("order {order} exceeds dim + 1 = {}", dim + 1)));
    }
    if !(h > 0.0) {
        return Err(Error::invalid("step must be positive"));
    }
    if order == 0 {
        return Ok(obs.eval_x(x).norm());
    }
    let mut best = (f64::NEG_INFINITY, 0.0, 0usize);
    let dirs = direction_grid(dim);
    for (i, v) in dirs.iter().enumerate() {
        let (val, change) = directional(obs, x, v, order, h);
        if val > best.0 {
            best = (val, change, i);
        }
    }
    if dim == 2 {
        let v = &dirs[best.2];
        let th0 = v[1].atan2(v[0]);
        let span = 4.0 * PI / dirs.len() as f64;
        let f = |th: f64| directional(obs, x, &[th.cos(), th.sin()], order, h);
        let (mut a, mut b) = (th0 - span, th0 + span);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (f(c).0, f(d).0);
        for _ in 0..60 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = f(c).0;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = f(d).0;
            }
        }
        let refined = f(0.5 * (a + b));
        if refined.0 > best.0 {
            best = (refined.0, refined.1, best.2);
        }
    }
    if best.1 > tol {
        return Err(Error::IllConditioned { change: best.1, tol });
    }
    Ok(best.0)
}

/// Closed form when the observable has one, finite differences otherwise.
pub fn derivative_norm(obs: &dyn Observable, x: &[f64], order: usize) -> Result<f64> {
    match obs.deriv_norm(x, order) {
        Some(v) => Ok(v),
        None => numeric_derivative_norm(obs, x, order, 1e-2, 1e-4),
    }
}

/// Scattered intensity `|sum_x eta_x exp(i k.x)|^2`.
pub fn intensity(ps: &PointSet, amplitudes: &[Complex64], k: &[f64]) -> Result<f64> {
    if amplitudes.len() != ps.len() {
        return Err(Error::SampleMismatch(format!(
            "{} amplitudes for {} sites",
            amplitudes.len(),
            ps.len()
        )));
    }
    if k.len() != ps.dim() {
        return Err(Error::invalid("wave vector has the wrong dimension"));
    }
    let sum: Complex64 = ps
        .points()
        .zip(amplitudes)
        .map(|(x, eta)| {
            let phase: f64 = x.iter().zip(k).map(|(a, b)| a * b).sum();
            eta * Complex64::from_polar(1.0, phase)
        })
        .sum();
    Ok(sum.norm_sqr())
}

/// Samples `alpha` at `points` and rejects it when `|alpha(x)| != |alpha(-x)|`
/// or, for observables declared Hermitian, `alpha(-x) != conj(alpha(x))`.
pub fn check_symmetry(obs: &dyn Observable, points: &[Vec<f64>], tol: f64) -> Result<()> {
    for x in points {
        let neg: Vec<f64> = x.iter().map(|c| -c).collect();
        let (a, b) = (obs.eval_x(x), obs.eval_x(&neg));
        let scale = a.norm().max(1.0);
        if (a.norm() - b.norm()).abs() > tol * scale {
            return Err(Error::Unsupported(format!(
                "|alpha(x)| != |alpha(-x)| at x = {x:?}"
            )));
        }
        if obs.is_hermitian() && (b - a.conj()).norm() > tol * scale {
            return Err(Error::Unsupported(format!(
                "alpha(-x) != conj(alpha(x)) at x = {x:?}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hermite_values_and_roots() {
        assert_eq!(hermite_he(0, 2.0), 1.0);
        assert_eq!(hermite_he(2, 2.0), 3.0);
        assert_eq!(hermite_he(3, 2.0), 2.0);
        let r = hermite_roots(3);
        assert_eq!(r.len(), 3);
        assert_abs_diff_eq!(r[2], 3f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(r[1], 0.0, epsilon = 1e-14);
        for m in 1..10 {
            for z in hermite_roots(m) {
                assert!(hermite_he(m, z).abs() < 1e-9 * (1..=m).product::<usize>() as f64);
            }
        }
    }

    #[test]
    fn gaussian_closed_form() {
        let g = GaussianObservable::new(1, 1.0).unwrap();
        assert_eq!(g.eval_x(&[0.0]), Complex64::new(1.0, 0.0));
        assert_abs_diff_eq!(g.eval_x(&[1.5]).re, (-1.125f64).exp(), epsilon = 1e-16);
        for x in [-2.0f64, -0.3, 0.0, 0.7, 3.0] {
            let want = x.abs() * (-x * x / 2.0f64).exp();
            assert_abs_diff_eq!(g.deriv_norm(&[x], 1).unwrap(), want, epsilon = 1e-15);
            assert_eq!(g.deriv_norm(&[x], 0).unwrap(), g.eval_x(&[x]).norm());
        }
        // maximum of |x| e^{-x^2/2} is e^{-1/2} at |x| = 1
        assert_abs_diff_eq!(g.deriv_norm(&[1.0], 1).unwrap(), (-0.5f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn numeric_derivative_examples() {
        let g1 = GaussianObservable::new(1, 1.0).unwrap();
        assert_eq!(numeric_derivative_norm(&g1, &[0.4], 0, 1e-2, 1e-6).unwrap(), g1.eval_x(&[0.4]).norm());
        let d = numeric_derivative_norm(&g1, &[0.0], 1, 1e-2, 1e-6).unwrap();
        assert!(d < 1e-6);
        let g2 = GaussianObservable::new(2, 1.0).unwrap();
        let d = numeric_derivative_norm(&g2, &[1.0, 0.0], 1, 1e-2, 1e-6).unwrap();
        assert_abs_diff_eq!(d, (-0.5f64).exp(), epsilon = 1e-6);
    }

    #[test]
    fn numeric_derivative_rejects_bad_input() {
        let g = GaussianObservable::new(1, 1.0).unwrap();
        assert!(numeric_derivative_norm(&g, &[0.0], 3, 1e-2, 1e-6).is_err());
        assert!(numeric_derivative_norm(&g, &[0.0, 1.0], 1, 1e-2, 1e-6).is_err());
        // a step far too small for a third derivative is flagged
        let r = numeric_derivative_norm(&g, &[0.3], 2, 1e-7, 1e-9);
        assert!(matches!(r, Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn normalization_and_scale_covariance() {
        for dim in [1, 2, 3] {
            let g = GaussianObservable::new(dim, 0.7).unwrap();
            assert_eq!(g.eval_x(&vec![0.0; dim]).re, 1.0);
        }
        let g1 = GaussianObservable::new(2, 1.0).unwrap();
        let gs = GaussianObservable::new(2, 2.5).unwrap();
        for x in [[0.1, 0.2], [1.0, -0.4], [0.0, 0.9]] {
            let sx = [2.5 * x[0], 2.5 * x[1]];
            assert_eq!(gs.eval_x(&x), g1.eval_x(&sx));
        }
    }

    #[test]
    fn symmetry_checks() {
        let pts = vec![vec![0.3, -1.0], vec![2.0, 0.5]];
        let g = GaussianObservable::new(2, 1.0).unwrap().with_center(vec![0.5, 1.0]).unwrap();
        check_symmetry(&g, &pts, 1e-14).unwrap();
        #[derive(Debug)]
        struct Lopsided;
        impl Observable for Lopsided {
            fn dim(&self) -> usize {
                1
            }
            fn eval_k(&self, _k: &[f64]) -> f64 {
                0.0
            }
            fn eval_x(&self, x: &[f64]) -> Complex64 {
                Complex64::new((-(x[0] - 1.0).powi(2)).exp(), 0.0)
            }
            fn tail_radius(&self, _tol: f64) -> f64 {
                10.0
            }
        }
        assert!(check_symmetry(&Lopsided, &[vec![0.5]], 1e-12).is_err());
    }

    #[test]
    fn intensity_examples() {
        let one = PointSet::from_points(&[vec![0.3]], "one").unwrap();
        assert_abs_diff_eq!(intensity(&one, &[Complex64::new(1.0, 0.0)], &[2.0]).unwrap(), 1.0, epsilon = 1e-15);
        let p = 2.0;
        let two = PointSet::from_points(&[vec![0.0], vec![p]], "two").unwrap();
        let eta = [Complex64::new(1.0, 0.0); 2];
        assert_abs_diff_eq!(intensity(&two, &eta, &[PI / p]).unwrap(), 0.0, epsilon = 1e-15);
        let lat = crate::pointset::lattice(2, 1.0, 3.0).unwrap();
        let ones = vec![Complex64::new(1.0, 0.0); lat.len()];
        let n = lat.len() as f64;
        assert_abs_diff_eq!(intensity(&lat, &ones, &[0.0, 0.0]).unwrap(), n * n, epsilon = 1e-9);
    }

    #[test]
    fn ball_oscillation_matches_scan() {
        let g = GaussianObservable::new(1, 1.3).unwrap();
        for (c, r) in [(2.0, 0.25), (0.1, 0.25), (-1.0, 0.6)] {
            let vals: Vec<f64> = (0..=4000)
                .map(|i| g.eval_x(&[c - r + 2.0 * r * i as f64 / 4000.0]).re)
                .collect();
            let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
            let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
            assert_abs_diff_eq!(g.ball_oscillation(&[c], r).unwrap(), hi - lo, epsilon = 1e-6);
        }
    }

    #[test]
    fn config_parses() {
        let c: ObservableConfig = serde_json::from_str(r#"{"type":"gaussian","sigma":0.5}"#).unwrap();
        let o = c.build(2).unwrap();
        assert_eq!(o.dim(), 2);
        assert!(serde_json::from_str::<ObservableConfig>(r#"{"type":"gaussian","sigma":1,"x":2}"#).is_err());
        assert!(serde_json::from_str::<ObservableConfig>(r#"{"type":"lorentzian","sigma":1}"#).is_err());
    }
}
