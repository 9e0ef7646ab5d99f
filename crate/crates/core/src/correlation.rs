//! Finite-volume autocorrelation functionals and their exact moments.
//!
//! Model A: `gamma(alpha) = (1/n) sum_{x,x'} eta_x conj(eta_x') alpha(x - x')`.
//! Model B: `gamma(alpha) = (1/n) sum_{x,x'} alpha(x - x' + w_x - w_x')`.
//!
//! Both are of the form `n gamma = sum_i V_i(a_i) + sum_{i<j} W_ij(a_i, a_j)`
//! in the support indices `a_i` of the sites. [`PairFunctional`] tabulates
//! `V` and `W` once; Monte Carlo, enumeration, the exact mean and the exact
//! variance all work from those tables.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::norms::{gamma_delta_seminorm, gamma_norm};
use crate::observables::Observable;
use crate::pointset::PointSet;
use crate::quadrature::{integrate, QuadOptions};
use crate::scatterers::{bounds_of, AmplitudeSpec, DislocationSpec, Model, Sample, SampleValues, ScattererSpec};
use crate::stats::kahan_sum;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationValue {
    pub value: Complex64,
    /// Divided by the number of sites.
    pub normalized: bool,
}

fn check_obs(ps: &PointSet, obs: &dyn Observable) -> Result<()> {
    if obs.dim() != ps.dim() {
        return Err(Error::invalid(format!(
            "observable dimension {} does not match point set dimension {}",
            obs.dim(),
            ps.dim()
        )));
    }
    if ps.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    Ok(())
}

/// Model A autocorrelation of one realization of the amplitudes.
pub fn autocorr_a(ps: &PointSet, amplitudes: &[Complex64], obs: &dyn Observable) -> Result<CorrelationValue> {
    check_obs(ps, obs)?;
    if amplitudes.len() != ps.len() {
        return Err(Error::SampleMismatch(format!(
            "{} amplitudes for {} sites",
            amplitudes.len(),
            ps.len()
        )));
    }
    let mut buf = vec![0.0; ps.dim()];
    let mut sum = ZERO;
    for (x, ex) in ps.points().zip(amplitudes) {
        for (z, ez) in ps.points().zip(amplitudes) {
            for ((b, a), c) in buf.iter_mut().zip(x).zip(z) {
                *b = a - c;
            }
            sum += ex * ez.conj() * obs.eval_x(&buf);
        }
    }
    Ok(CorrelationValue {
        value: sum / ps.len() as f64,
        normalized: true,
    })
}

/// Model B autocorrelation of one realization of the dislocations
/// (`dim` entries per site, flat).
pub fn autocorr_b(ps: &PointSet, dislocations: &[f64], obs: &dyn Observable) -> Result<CorrelationValue> {
    check_obs(ps, obs)?;
    let dim = ps.dim();
    if dislocations.len() != ps.len() * dim {
        return Err(Error::SampleMismatch(format!(
            "{} dislocation coordinates for {} sites in dimension {dim}",
            dislocations.len(),
            ps.len()
        )));
    }
    let mut buf = vec![0.0; dim];
    let mut sum = ZERO;
    for i in 0..ps.len() {
        for j in 0..ps.len() {
            if i == j {
                for b in buf.iter_mut() {
                    *b = 0.0;
                }
            } else {
                let (x, y) = (ps.point(i), ps.point(j));
                let (wx, wy) = (&dislocations[i * dim..(i + 1) * dim], &dislocations[j * dim..(j + 1) * dim]);
                for k in 0..dim {
                    buf[k] = x[k] - y[k] + wx[k] - wy[k];
                }
            }
            sum += obs.eval_x(&buf);
        }
    }
    Ok(CorrelationValue {
        value: sum / ps.len() as f64,
        normalized: true,
    })
}

pub fn autocorr(ps: &PointSet, sample: &Sample, obs: &dyn Observable) -> Result<CorrelationValue> {
    match &sample.values {
        SampleValues::Amplitudes(a) => autocorr_a(ps, a, obs),
        SampleValues::Dislocations { flat, .. } => autocorr_b(ps, flat, obs),
    }
}

/// Exact mean of the Model A autocorrelation: the autocorrelation of the
/// site means plus the diffuse term `(1/n) sum_x (E|eta_x|^2 - |E eta_x|^2) alpha(0)`.
pub fn exact_mean_a(ps: &PointSet, spec: &AmplitudeSpec, obs: &dyn Observable) -> Result<Complex64> {
    check_obs(ps, obs)?;
    let laws = (0..ps.len()).map(|i| spec.site(i)).collect::<Result<Vec<_>>>()?;
    let means: Vec<Complex64> = laws.iter().map(|l| l.mean()).collect();
    let coherent = autocorr_a(ps, &means, obs)?.value;
    let diffuse: f64 = kahan_sum(laws.iter().zip(&means).map(|(l, m)| l.second_moment() - m.norm_sqr()));
    let origin = obs.eval_x(&vec![0.0; ps.dim()]);
    Ok(coherent + origin * (diffuse / ps.len() as f64))
}

/// Exact mean of the Model B autocorrelation: pair expectations over the
/// product support of `(w_x, w_x')` plus `alpha(0)` from the diagonal.
pub fn exact_mean_b(ps: &PointSet, spec: &DislocationSpec, obs: &dyn Observable) -> Result<Complex64> {
    check_obs(ps, obs)?;
    let dim = ps.dim();
    let laws = (0..ps.len()).map(|i| spec.site(i)).collect::<Result<Vec<_>>>()?;
    let mut buf = vec![0.0; dim];
    let mut sum = ZERO;
    for i in 0..ps.len() {
        for j in 0..ps.len() {
            if i == j {
                continue;
            }
            let (x, y) = (ps.point(i), ps.point(j));
            for (wa, pa) in laws[i].support().iter().zip(laws[i].probs()) {
                for (wb, pb) in laws[j].support().iter().zip(laws[j].probs()) {
                    for k in 0..dim {
                        buf[k] = x[k] - y[k] + wa[k] - wb[k];
                    }
                    sum += obs.eval_x(&buf) * (pa * pb);
                }
            }
        }
    }
    let origin = obs.eval_x(&vec![0.0; dim]);
    Ok(sum / ps.len() as f64 + origin)
}

pub fn exact_mean(ps: &PointSet, spec: &ScattererSpec, obs: &dyn Observable) -> Result<Complex64> {
    match spec {
        ScattererSpec::Amplitudes(s) => exact_mean_a(ps, s, obs),
        ScattererSpec::Dislocations(s) => exact_mean_b(ps, s, obs),
    }
}

/// `X_r` (or `Y_r`) `= n (gamma(sample) - E gamma)`.
pub fn centered_value(ps: &PointSet, spec: &ScattererSpec, sample: &Sample, obs: &dyn Observable) -> Result<Complex64> {
    if sample.model() != spec.model() {
        return Err(Error::SampleMismatch("sample and spec belong to different models".into()));
    }
    let g = autocorr(ps, sample, obs)?.value;
    let m = exact_mean(ps, spec, obs)?;
    Ok((g - m) * ps.len() as f64)
}

#[derive(Debug, Clone)]
enum Table {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl Table {
    fn get(&self, k: usize) -> Complex64 {
        match self {
            Table::Real(v) => Complex64::new(v[k], 0.0),
            Table::Complex(v) => v[k],
        }
    }

    fn from(values: Vec<Complex64>, real: bool) -> Table {
        if real {
            Table::Real(values.into_iter().map(|c| c.re).collect())
        } else {
            Table::Complex(values)
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pair {
    i: u32,
    j: u32,
    offset: usize,
}

/// Tabulated `n gamma = sum_i V_i(a_i) + sum_{i<j} W_ij(a_i, a_j)`.
///
/// Pairs whose table is identically zero in floating point are dropped,
/// which leaves every sum bit-for-bit unchanged.
#[derive(Debug, Clone)]
pub struct PairFunctional {
    model: Model,
    n: usize,
    sizes: Vec<usize>,
    probs: Vec<Vec<f64>>,
    site: Table,
    site_offsets: Vec<usize>,
    pairs: Vec<Pair>,
    pair_table: Table,
    mean_total: Complex64,
}

/// Which route computed an exact variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariancePath {
    /// Hoeffding decomposition into site and degenerate pair terms.
    Decomposition,
    /// Full enumeration of all configurations.
    Enumeration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CenteredStats {
    /// Exact mean of the normalized autocorrelation.
    pub mean: Complex64,
    /// `E |X_r|^2` (or `E |Y_r|^2`).
    pub variance: f64,
    /// `s_r = E|X_r|^2 / (n (K ||alpha||_Gamma)^2)` or
    /// `q_r = E|Y_r|^2 / (n ||alpha||_{Gamma,delta}^2)`; zero when the
    /// variance vanishes.
    pub s_or_q: f64,
    /// `K ||alpha||_Gamma` or `||alpha||_{Gamma,delta}`.
    pub scale: f64,
    pub path: VariancePath,
}

impl PairFunctional {
    pub fn new(ps: &PointSet, spec: &ScattererSpec, obs: &dyn Observable) -> Result<Self> {
        check_obs(ps, obs)?;
        spec.check_against(ps)?;
        let n = ps.len();
        let dim = ps.dim();
        let sizes = spec.support_sizes(n)?;
        let probs = (0..n)
            .map(|i| (0..sizes[i]).map(|a| spec.prob(i, a)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let mut site = Vec::new();
        let mut site_offsets = Vec::with_capacity(n);
        let mut pairs = Vec::new();
        let mut pair_vals = Vec::new();
        let mut buf = vec![0.0; dim];
        let mut diff = |x: &[f64], y: &[f64], wx: Option<&[f64]>, wy: Option<&[f64]>| {
            for k in 0..dim {
                buf[k] = x[k] - y[k] + wx.map_or(0.0, |w| w[k]) - wy.map_or(0.0, |w| w[k]);
            }
            obs.eval_x(&buf)
        };
        match spec {
            ScattererSpec::Amplitudes(s) => {
                let laws = (0..n).map(|i| s.site(i)).collect::<Result<Vec<_>>>()?;
                let origin = diff(ps.point(0), ps.point(0), None, None);
                for law in &laws {
                    site_offsets.push(site.len());
                    site.extend(law.support().iter().map(|e| origin * e.norm_sqr()));
                }
                let mut tab = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        let fwd = diff(ps.point(i), ps.point(j), None, None);
                        let bwd = diff(ps.point(j), ps.point(i), None, None);
                        if fwd == ZERO && bwd == ZERO {
                            continue;
                        }
                        tab.clear();
                        for ea in laws[i].support() {
                            for eb in laws[j].support() {
                                tab.push(ea * eb.conj() * fwd + eb * ea.conj() * bwd);
                            }
                        }
                        if tab.iter().all(|&v| v == ZERO) {
                            continue;
                        }
                        pairs.push(Pair {
                            i: i as u32,
                            j: j as u32,
                            offset: pair_vals.len(),
                        });
                        pair_vals.extend_from_slice(&tab);
                    }
                }
            }
            ScattererSpec::Dislocations(s) => {
                let laws = (0..n).map(|i| s.site(i)).collect::<Result<Vec<_>>>()?;
                let origin = diff(ps.point(0), ps.point(0), None, None);
                for law in &laws {
                    site_offsets.push(site.len());
                    site.extend(std::iter::repeat_n(origin, law.len()));
                }
                let mut tab = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        tab.clear();
                        for wa in laws[i].support() {
                            for wb in laws[j].support() {
                                let fwd = diff(ps.point(i), ps.point(j), Some(wa), Some(wb));
                                let bwd = diff(ps.point(j), ps.point(i), Some(wb), Some(wa));
                                tab.push(fwd + bwd);
                            }
                        }
                        if tab.iter().all(|&v| v == ZERO) {
                            continue;
                        }
                        pairs.push(Pair {
                            i: i as u32,
                            j: j as u32,
                            offset: pair_vals.len(),
                        });
                        pair_vals.extend_from_slice(&tab);
                    }
                }
            }
        }
        let real = site.iter().chain(&pair_vals).all(|v| v.im == 0.0);
        let mut f = PairFunctional {
            model: spec.model(),
            n,
            sizes,
            probs,
            site: Table::from(site, real),
            site_offsets,
            pairs,
            pair_table: Table::from(pair_vals, real),
            mean_total: ZERO,
        };
        f.mean_total = f.expected_total();
        Ok(f)
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_real(&self) -> bool {
        matches!(self.site, Table::Real(_))
    }

    pub fn support_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn probs(&self, site: usize) -> &[f64] {
        &self.probs[site]
    }

    /// Number of site pairs with a non-zero table.
    pub fn active_pairs(&self) -> usize {
        self.pairs.len()
    }

    fn expected_total(&self) -> Complex64 {
        let mut sum = ZERO;
        for i in 0..self.n {
            for (a, p) in self.probs[i].iter().enumerate() {
                sum += self.site.get(self.site_offsets[i] + a) * *p;
            }
        }
        for pr in &self.pairs {
            let (qi, qj) = (&self.probs[pr.i as usize], &self.probs[pr.j as usize]);
            for (a, pa) in qi.iter().enumerate() {
                for (b, pb) in qj.iter().enumerate() {
                    sum += self.pair_table.get(pr.offset + a * qj.len() + b) * (pa * pb);
                }
            }
        }
        sum
    }

    /// Exact mean of the normalized autocorrelation.
    pub fn mean(&self) -> Complex64 {
        self.mean_total / self.n as f64
    }

    fn check_indices(&self, idx: &[usize]) -> Result<()> {
        if idx.len() != self.n {
            return Err(Error::SampleMismatch(format!("{} indices for {} sites", idx.len(), self.n)));
        }
        if let Some(i) = (0..self.n).find(|&i| idx[i] >= self.sizes[i]) {
            return Err(Error::SampleMismatch(format!("support index out of range at site {i}")));
        }
        Ok(())
    }

    /// `n gamma` for the configuration with support indices `idx`.
    pub fn total(&self, idx: &[usize]) -> Result<Complex64> {
        self.check_indices(idx)?;
        Ok(match (&self.site, &self.pair_table) {
            (Table::Real(site), Table::Real(tab)) => Complex64::new(self.total_real(site, tab, idx), 0.0),
            _ => {
                let mut sum = ZERO;
                for i in 0..self.n {
                    sum += self.site.get(self.site_offsets[i] + idx[i]);
                }
                for pr in &self.pairs {
                    let (i, j) = (pr.i as usize, pr.j as usize);
                    sum += self.pair_table.get(pr.offset + idx[i] * self.sizes[j] + idx[j]);
                }
                sum
            }
        })
    }

    fn total_real(&self, site: &[f64], tab: &[f64], idx: &[usize]) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.n {
            sum += site[self.site_offsets[i] + idx[i]];
        }
        for pr in &self.pairs {
            let (i, j) = (pr.i as usize, pr.j as usize);
            sum += tab[pr.offset + idx[i] * self.sizes[j] + idx[j]];
        }
        sum
    }

    /// `X_r` (or `Y_r`) for the configuration `idx`.
    pub fn centered(&self, idx: &[usize]) -> Result<Complex64> {
        Ok(self.total(idx)? - self.mean_total)
    }

    /// Exact `E |X_r|^2` by the Hoeffding decomposition
    /// `X = sum_i phi_i(a_i) + sum_{i<j} g_ij(a_i, a_j)`, whose terms are
    /// mutually orthogonal.
    pub fn variance(&self) -> f64 {
        let mut first: Vec<Vec<Complex64>> = (0..self.n)
            .map(|i| {
                let vals: Vec<Complex64> = (0..self.sizes[i]).map(|a| self.site.get(self.site_offsets[i] + a)).collect();
                let m: Complex64 = vals.iter().zip(&self.probs[i]).map(|(v, p)| v * p).sum();
                vals.into_iter().map(|v| v - m).collect()
            })
            .collect();
        let mut second = 0.0;
        let mut fx = Vec::new();
        let mut fy = Vec::new();
        for pr in &self.pairs {
            let (i, j) = (pr.i as usize, pr.j as usize);
            let (qi, qj) = (&self.probs[i], &self.probs[j]);
            let w = |a: usize, b: usize| self.pair_table.get(pr.offset + a * qj.len() + b);
            let mut mu = ZERO;
            fx.clear();
            fx.resize(qi.len(), ZERO);
            fy.clear();
            fy.resize(qj.len(), ZERO);
            for (a, pa) in qi.iter().enumerate() {
                for (b, pb) in qj.iter().enumerate() {
                    let v = w(a, b);
                    mu += v * (pa * pb);
                    fx[a] += v * *pb;
                    fy[b] += v * *pa;
                }
            }
            for v in fx.iter_mut().chain(fy.iter_mut()) {
                *v -= mu;
            }
            for (a, pa) in qi.iter().enumerate() {
                for (b, pb) in qj.iter().enumerate() {
                    second += pa * pb * (w(a, b) - mu - fx[a] - fy[b]).norm_sqr();
                }
            }
            for a in 0..qi.len() {
                first[i][a] += fx[a];
            }
            for b in 0..qj.len() {
                first[j][b] += fy[b];
            }
        }
        let first: f64 = kahan_sum(
            first
                .iter()
                .zip(&self.probs)
                .map(|(f, q)| f.iter().zip(q).map(|(v, p)| p * v.norm_sqr()).sum::<f64>()),
        );
        first + second
    }

    /// Calls `visit(probability, X_r)` for every configuration.
    pub fn enumerate<F: FnMut(f64, Complex64)>(&self, limit: u128, mut visit: F) -> Result<u128> {
        let configs = self.sizes.iter().fold(1u128, |acc, &s| acc.saturating_mul(s as u128));
        if configs > limit {
            return Err(Error::EnumerationTooLarge { configs, limit });
        }
        let mut idx = vec![0usize; self.n];
        loop {
            let p: f64 = idx.iter().enumerate().map(|(i, &a)| self.probs[i][a]).product();
            visit(p, self.centered(&idx)?);
            let mut k = 0;
            while k < self.n {
                idx[k] += 1;
                if idx[k] < self.sizes[k] {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == self.n {
                break;
            }
        }
        Ok(configs)
    }
}

/// Default cap on the number of enumerated configurations.
pub const ENUMERATION_LIMIT: u128 = 1 << 20;

/// `K ||alpha||_Gamma` for amplitudes, `||alpha||_{Gamma,delta}` for dislocations.
pub fn variance_scale(ps: &PointSet, spec: &ScattererSpec, obs: &dyn Observable) -> Result<f64> {
    Ok(match spec {
        ScattererSpec::Amplitudes(s) => bounds_of(s).k * gamma_norm(obs, ps)?.value,
        ScattererSpec::Dislocations(s) => gamma_delta_seminorm(obs, ps, s.delta())?.value,
    })
}

/// `variance / (n scale^2)`, zero when the variance is zero.
pub fn normalized_variance(variance: f64, n: usize, scale: f64) -> f64 {
    if variance == 0.0 {
        0.0
    } else {
        variance / (n as f64 * scale * scale)
    }
}

pub fn exact_variance(ps: &PointSet, spec: &ScattererSpec, obs: &dyn Observable) -> Result<CenteredStats> {
    exact_variance_with(ps, spec, obs, VariancePath::Decomposition)
}

pub fn exact_variance_with(
    ps: &PointSet,
    spec: &ScattererSpec,
    obs: &dyn Observable,
    path: VariancePath,
) -> Result<CenteredStats> {
    let f = PairFunctional::new(ps, spec, obs)?;
    let variance = match path {
        VariancePath::Decomposition => f.variance(),
        VariancePath::Enumeration => {
            let mut terms = Vec::new();
            f.enumerate(ENUMERATION_LIMIT, |p, x| terms.push(p * x.norm_sqr()))?;
            kahan_sum(terms)
        }
    };
    let scale = variance_scale(ps, spec, obs)?;
    Ok(CenteredStats {
        mean: f.mean(),
        variance,
        s_or_q: normalized_variance(variance, ps.len(), scale),
        scale,
        path,
    })
}

fn k_window_1d(obs: &dyn Observable) -> Result<(f64, f64)> {
    if obs.dim() != 1 {
        return Err(Error::Unsupported("k-space integrals are implemented in one dimension".into()));
    }
    let (c, r) = obs
        .k_window(1e-16)
        .ok_or_else(|| Error::Unsupported("observable has no k-space window".into()))?;
    Ok((c[0], r))
}

fn oscillation_breakpoints(lo: f64, hi: f64, span: f64) -> Vec<f64> {
    // one piece per half period of the fastest oscillation
    let step = if span > 0.0 { PI / span } else { hi - lo };
    let pieces = (((hi - lo) / step).ceil() as usize).clamp(1, 4096);
    (1..pieces).map(|i| lo + (hi - lo) * i as f64 / pieces as f64).collect()
}

fn diameter_1d(ps: &PointSet) -> f64 {
    let (lo, hi) = ps
        .coords()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    hi - lo
}

/// `(1/n) int |sum_x eta_x exp(i k x)|^2 phi(k) dk` in one dimension.
pub fn intensity_integral(ps: &PointSet, amplitudes: &[Complex64], obs: &dyn Observable) -> Result<f64> {
    let (c, r) = k_window_1d(obs)?;
    if amplitudes.len() != ps.len() {
        return Err(Error::SampleMismatch("amplitude count".into()));
    }
    let bps = oscillation_breakpoints(c - r, c + r, diameter_1d(ps));
    let opts = QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-13,
        max_intervals: 200_000,
    };
    let q = integrate(
        |k| {
            let s: Complex64 = ps
                .coords()
                .iter()
                .zip(amplitudes)
                .map(|(x, e)| e * Complex64::from_polar(1.0, k * x))
                .sum();
            s.norm_sqr() * obs.eval_k(&[k])
        },
        c - r,
        c + r,
        &bps,
        &opts,
    )?;
    Ok(q.value / ps.len() as f64)
}

/// k-space mean density of the Model B intensity for i.i.d. dislocations
/// with law `mu`: `gamma0(k) |mu^(k)|^2 + 1 - |mu^(k)|^2`, where
/// `gamma0(k) = (1/n) |sum_x exp(i k x)|^2` and `mu^(k) = E exp(i k w)`.
pub fn debye_waller_density(ps: &PointSet, law: &crate::scatterers::Discrete<Vec<f64>>, k: &[f64]) -> Result<f64> {
    if k.len() != ps.dim() {
        return Err(Error::invalid("wave vector has the wrong dimension"));
    }
    let dot = |a: &[f64]| a.iter().zip(k).map(|(u, v)| u * v).sum::<f64>();
    let coherent: Complex64 = ps.points().map(|x| Complex64::from_polar(1.0, dot(x))).sum();
    let gamma0 = coherent.norm_sqr() / ps.len() as f64;
    let mu_hat: Complex64 = law
        .support()
        .iter()
        .zip(law.probs())
        .map(|(w, p)| Complex64::from_polar(*p, dot(w)))
        .sum();
    let dw = mu_hat.norm_sqr();
    Ok(gamma0 * dw + 1.0 - dw)
}

/// `int phi(k) debye_waller_density(k) dk` in one dimension.
pub fn debye_waller_integral(
    ps: &PointSet,
    law: &crate::scatterers::Discrete<Vec<f64>>,
    obs: &dyn Observable,
) -> Result<f64> {
    let (c, r) = k_window_1d(obs)?;
    let span = diameter_1d(ps) + 2.0 * law.support().iter().map(|w| w[0].abs()).fold(0.0, f64::max);
    let bps = oscillation_breakpoints(c - r, c + r, span);
    let opts = QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-13,
        max_intervals: 200_000,
    };
    let mut failure = None;
    let q = integrate(
        |k| match debye_waller_density(ps, law, &[k]) {
            Ok(v) => v * obs.eval_k(&[k]),
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        c - r,
        c + r,
        &bps,
        &opts,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(q.value)
}
