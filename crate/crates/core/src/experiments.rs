//! Verification harness: exact enumeration, Monte Carlo tails, the
//! Laplace-gap and large-deviation checks, the CLT experiment and the norm
//! battery. Every run produces an [`ExperimentReport`] whose verdicts name
//! the empirical and theoretical entries they compare.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    Command, LdMode, PointSetConfig, RunCltParams, RunLdParams, VerifyLaplaceParams, VerifyNormsParams,
};
use crate::correlation::{normalized_variance, variance_scale, PairFunctional, ENUMERATION_LIMIT};
use crate::error::{Error, Result};
use crate::norms::{check_gamma_domination, check_seminorm_domination, gamma_delta_seminorm, gamma_norm, sobolev_d_norm, sobolev_norm};
use crate::observables::{Observable, ObservableConfig, SharedObservable};
use crate::pointset::{verify_min_distance, PointSet};
use crate::rates::{self, laplace_gap_bound, ld_bound, BoundInputs, RateParams, Theorem};
use crate::scatterers::{bounds_of, draw_indices, Model, ScattererDoc, ScattererSpec};
use crate::stats::{clopper_pearson, kahan_sum, ks_distance_normal, moments, Interval};

// ---- report -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measured {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub pass: bool,
    pub empirical: String,
    pub theoretical: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: serde_json::Value,
    pub empirical: BTreeMap<String, Measured>,
    pub theoretical: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, Verdict>,
    pub seed: u64,
    /// Wall-clock fields; absent in canonical output.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_at_unix: Option<u64>,
}

impl ExperimentReport {
    pub fn new(config: serde_json::Value, seed: u64) -> Self {
        ExperimentReport {
            config,
            empirical: BTreeMap::new(),
            theoretical: BTreeMap::new(),
            verdicts: BTreeMap::new(),
            seed,
            runtime_seconds: None,
            finished_at_unix: None,
        }
    }

    pub fn measure(&mut self, key: impl Into<String>, value: f64, ci: Option<Interval>) {
        self.empirical.insert(
            key.into(),
            Measured {
                value,
                ci: ci.map(|c| [c.lo, c.hi]),
            },
        );
    }

    pub fn theory(&mut self, key: impl Into<String>, value: f64) {
        self.theoretical.insert(key.into(), value);
    }

    /// Records a verdict; both referenced entries must already exist.
    pub fn verdict(&mut self, key: impl Into<String>, pass: bool, empirical: &str, theoretical: &str) {
        assert!(self.empirical.contains_key(empirical), "unknown empirical key {empirical}");
        assert!(self.theoretical.contains_key(theoretical), "unknown theoretical key {theoretical}");
        self.verdicts.insert(
            key.into(),
            Verdict {
                pass,
                empirical: empirical.into(),
                theoretical: theoretical.into(),
            },
        );
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.values().all(|v| v.pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.verdicts
            .iter()
            .filter(|(_, v)| !v.pass)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize") + "\n"
    }
}

/// `index,x_re,x_im`, one row per Monte Carlo sample.
pub fn samples_csv(values: &[Complex64]) -> String {
    let mut out = String::from("index,x_re,x_im\n");
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{i},{:.16e},{:.16e}\n", v.re, v.im));
    }
    out
}

// ---- exact enumeration ------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Outcome {
    pub probability: f64,
    pub value: Complex64,
}

/// Exact law of `X_r` (or `Y_r`), one outcome per configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactDistribution {
    pub outcomes: Vec<Outcome>,
    pub total_configs: u128,
}

/// `e^y - 1 - y - y^2/2` without cancellation.
fn exp_remainder3(y: f64) -> f64 {
    if y.abs() < 0.5 {
        let mut term = y * y * y / 6.0;
        let mut sum = 0.0f64;
        let mut k = 3.0;
        while term.abs() > 1e-18 * sum.abs() && term != 0.0 {
            sum += term;
            k += 1.0;
            term *= y / k;
        }
        sum
    } else {
        y.exp_m1() - y - 0.5 * y * y
    }
}

/// `u - log(1 + u)` without cancellation.
fn log_remainder(u: f64) -> f64 {
    if u.abs() < 0.25 {
        // sum_{k>=2} (-1)^k u^k / k
        let mut pow = u * u;
        let mut sum = 0.0f64;
        let mut k = 2.0;
        while pow.abs() / k > 1e-18 * sum.abs() && pow != 0.0 {
            sum += pow / k;
            pow *= -u;
            k += 1.0;
        }
        sum
    } else {
        u - u.ln_1p()
    }
}

impl ExactDistribution {
    pub fn total_probability(&self) -> f64 {
        kahan_sum(self.outcomes.iter().map(|o| o.probability))
    }

    pub fn mean(&self) -> Complex64 {
        let re = kahan_sum(self.outcomes.iter().map(|o| o.probability * o.value.re));
        let im = kahan_sum(self.outcomes.iter().map(|o| o.probability * o.value.im));
        Complex64::new(re, im)
    }

    /// `E |X|^2`.
    pub fn second_moment(&self) -> f64 {
        kahan_sum(self.outcomes.iter().map(|o| o.probability * o.value.norm_sqr()))
    }

    fn max_abs(&self) -> f64 {
        self.outcomes.iter().map(|o| o.value.norm()).fold(0.0, f64::max)
    }

    /// Probabilities sum to one and the law is centred, both within `1e-10`.
    pub fn check(&self) -> Result<()> {
        let total = self.total_probability();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::MalformedDistribution(format!("probabilities sum to {total}")));
        }
        let m = self.mean().norm();
        if m > 1e-10 * self.max_abs().max(1.0) {
            return Err(Error::MalformedDistribution(format!("mean {m} is not zero")));
        }
        Ok(())
    }

    /// `P(|X| >= threshold)`.
    pub fn tail(&self, threshold: f64) -> f64 {
        kahan_sum(
            self.outcomes
                .iter()
                .filter(|o| o.value.norm() >= threshold)
                .map(|o| o.probability),
        )
    }

    /// Distinct positive values of `|X|`, ascending.
    pub fn jump_points(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.outcomes.iter().map(|o| o.value.norm()).filter(|&x| x > 0.0).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    fn real_values(&self) -> Result<Vec<(f64, f64)>> {
        let scale = self.max_abs().max(1.0);
        self.outcomes
            .iter()
            .map(|o| {
                if o.value.im.abs() > 1e-10 * scale {
                    Err(Error::NotReal(o.value.im))
                } else {
                    Ok((o.probability, o.value.re))
                }
            })
            .collect()
    }

    /// `log E exp(c X) - c^2 E X^2 / 2` for real `X`.
    pub fn laplace_gap(&self, c: f64) -> Result<f64> {
        let vals = self.real_values()?;
        let m1 = kahan_sum(vals.iter().map(|(p, x)| p * x));
        let m2 = kahan_sum(vals.iter().map(|(p, x)| p * x * x));
        let r3 = kahan_sum(vals.iter().map(|(p, x)| p * exp_remainder3(c * x)));
        // E e^{cX} = 1 + u
        let u = c * m1 + 0.5 * c * c * m2 + r3;
        Ok(c * m1 + r3 - log_remainder(u))
    }
}

pub fn enumerate_functional(f: &PairFunctional) -> Result<ExactDistribution> {
    let mut outcomes = Vec::new();
    let total_configs = f.enumerate(ENUMERATION_LIMIT, |p, v| outcomes.push(Outcome { probability: p, value: v }))?;
    Ok(ExactDistribution { outcomes, total_configs })
}

/// Exact law of the centred functional; refuses more than `2^20` configurations.
pub fn enumerate_exact(ps: &PointSet, spec: &ScattererSpec, obs: &dyn Observable) -> Result<ExactDistribution> {
    enumerate_functional(&PairFunctional::new(ps, spec, obs)?)
}

// ---- Monte Carlo ---------------------------------------------------------------

/// Centred values for Monte Carlo samples `0..n_samples`; sample `j` is
/// drawn from stream `j`, so the result does not depend on threading.
pub fn mc_centered(f: &PairFunctional, spec: &ScattererSpec, n_samples: usize, seed: u64) -> Result<Vec<Complex64>> {
    (0..n_samples)
        .into_par_iter()
        .map(|j| {
            let idx = draw_indices(spec, f.len(), seed, j as u64)?;
            f.centered(&idx)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McTail {
    pub epsilon: f64,
    pub exceedances: u64,
    pub n_samples: u64,
    pub p_hat: f64,
    pub ci: Interval,
}

/// Frequency of `|X| >= epsilon n` with a 99% Clopper–Pearson interval.
pub fn tail_from_values(values: &[Complex64], epsilon: f64, n_sites: usize) -> Result<McTail> {
    let threshold = epsilon * n_sites as f64;
    let k = values.iter().filter(|v| v.norm() >= threshold).count() as u64;
    let n = values.len() as u64;
    Ok(McTail {
        epsilon,
        exceedances: k,
        n_samples: n,
        p_hat: k as f64 / n as f64,
        ci: clopper_pearson(k, n, 0.99)?,
    })
}

pub fn mc_tail(
    ps: &PointSet,
    spec: &ScattererSpec,
    obs: &dyn Observable,
    epsilon: f64,
    n_samples: usize,
    seed: u64,
) -> Result<McTail> {
    if n_samples < 100 {
        return Err(Error::invalid("need at least 100 samples"));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::invalid("epsilon must be >= 0"));
    }
    let f = PairFunctional::new(ps, spec, obs)?;
    let values = mc_centered(&f, spec, n_samples, seed)?;
    tail_from_values(&values, epsilon, ps.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: Complex64,
    /// Standard errors of the real and imaginary parts.
    pub std_error: [f64; 2],
    pub exact: Complex64,
}

/// Monte Carlo mean of the normalized autocorrelation next to its exact value.
pub fn mc_mean(
    ps: &PointSet,
    spec: &ScattererSpec,
    obs: &dyn Observable,
    n_samples: usize,
    seed: u64,
) -> Result<MeanEstimate> {
    if n_samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let f = PairFunctional::new(ps, spec, obs)?;
    let n = ps.len() as f64;
    let exact = f.mean();
    let vals: Vec<Complex64> = mc_centered(&f, spec, n_samples, seed)?
        .into_iter()
        .map(|x| exact + x / n)
        .collect();
    let m = n_samples as f64;
    let re = kahan_sum(vals.iter().map(|v| v.re)) / m;
    let im = kahan_sum(vals.iter().map(|v| v.im)) / m;
    let var_re = kahan_sum(vals.iter().map(|v| (v.re - re).powi(2))) / (m - 1.0);
    let var_im = kahan_sum(vals.iter().map(|v| (v.im - im).powi(2))) / (m - 1.0);
    Ok(MeanEstimate {
        mean: Complex64::new(re, im),
        std_error: [(var_re / m).sqrt(), (var_im / m).sqrt()],
        exact,
    })
}

// ---- theorem-level checks ---------------------------------------------------------

/// A point set with scatterers and an observable, ready for experiments.
#[derive(Debug, Clone)]
pub struct Instance {
    pub ps: PointSet,
    pub spec: ScattererSpec,
    pub obs: SharedObservable,
}

impl Instance {
    pub fn new(ps: PointSet, spec: ScattererSpec, obs: SharedObservable) -> Result<Self> {
        spec.check_against(&ps)?;
        if obs.dim() != ps.dim() {
            return Err(Error::invalid("observable and point set dimensions differ"));
        }
        Ok(Instance { ps, spec, obs })
    }

    pub fn from_config(
        pointset: &PointSetConfig,
        scatterers: &ScattererDoc,
        observable: &ObservableConfig,
        seed: u64,
    ) -> Result<Self> {
        let ps = pointset.build(seed)?;
        let spec = scatterers.build(ps.dim())?;
        let obs = observable.build(ps.dim())?;
        Instance::new(ps, spec, obs)
    }

    pub fn model(&self) -> Model {
        self.spec.model()
    }
}

/// Scale entering the bound of a theorem form, or `None` when the form does
/// not apply (dislocations with `a - 4 delta <= 0`).
pub fn theorem_scale(inst: &Instance, which: Theorem) -> Result<Option<f64>> {
    if which.model() != inst.model() {
        return Err(Error::invalid(format!("{which:?} does not match the scatterer model")));
    }
    let obs: &dyn Observable = &*inst.obs;
    let a = verify_min_distance(&inst.ps).value();
    Ok(match (which, &inst.spec) {
        (Theorem::ASimple, ScattererSpec::Amplitudes(s)) => Some(bounds_of(s).k * sobolev_norm(obs, a)?.value),
        (Theorem::AAddition, ScattererSpec::Amplitudes(s)) => Some(bounds_of(s).k * gamma_norm(obs, &inst.ps)?.value),
        (Theorem::BSimple, ScattererSpec::Dislocations(s)) => {
            let a_tilde = a - 4.0 * s.delta();
            if a_tilde > 0.0 {
                Some(4.0 * s.delta() * sobolev_d_norm(obs, a_tilde)?.value)
            } else {
                None
            }
        }
        (Theorem::BAddition, ScattererSpec::Dislocations(s)) => {
            Some(gamma_delta_seminorm(obs, &inst.ps, s.delta())?.value)
        }
        _ => unreachable!("model checked above"),
    })
}

/// Bound on `P(|X_r| >= epsilon n)`; a zero scale means `X_r = 0` surely.
fn tail_bound(epsilon: f64, n: usize, scale: f64, s: f64, which: Theorem, params: &RateParams) -> Result<f64> {
    if scale == 0.0 {
        return Ok(if epsilon > 0.0 { 0.0 } else { 2.0 });
    }
    ld_bound(
        &BoundInputs {
            epsilon,
            cardinality: n,
            scale,
            s,
        },
        which,
        params,
    )
}

fn theorem_key(t: Theorem) -> &'static str {
    match t {
        Theorem::ASimple => "a_simple",
        Theorem::AAddition => "a_addition",
        Theorem::BSimple => "b_simple",
        Theorem::BAddition => "b_addition",
    }
}

/// Output of one experiment: the report plus optional data files.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub pointset: Option<PointSet>,
    /// Centred values `X_r` (or `Y_r`) per Monte Carlo sample.
    pub samples: Option<Vec<Complex64>>,
    /// Human-readable table, if the command has one.
    pub text: Option<String>,
}

pub struct LdOptions<'a> {
    pub epsilons: &'a [f64],
    pub n_samples: usize,
    pub mode: LdMode,
    /// Empty selects every form for the model.
    pub theorems: &'a [Theorem],
    pub params: RateParams,
    pub seed: u64,
}

/// Large-deviation check: empirical (or exact) tails against the bound of
/// each selected theorem form, plus `addition <= simple` whenever the
/// normalized variance is at most 4. In exact mode the tail is also checked
/// at every jump point of `|X_r| / n`, which covers every `epsilon > 0`.
pub fn verify_ld_bound(inst: &Instance, opts: &LdOptions, config: serde_json::Value) -> Result<RunOutput> {
    let model = inst.model();
    let explicit = !opts.theorems.is_empty();
    let theorems: Vec<Theorem> = if explicit {
        opts.theorems.to_vec()
    } else {
        match model {
            Model::A => vec![Theorem::ASimple, Theorem::AAddition],
            Model::B => vec![Theorem::BSimple, Theorem::BAddition],
        }
    };
    if let Some(e) = opts.epsilons.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::invalid(format!("epsilons must be positive, got {e}")));
    }
    let n = inst.ps.len();
    let mut report = ExperimentReport::new(config, opts.seed);
    let f = PairFunctional::new(&inst.ps, &inst.spec, &*inst.obs)?;
    let variance = f.variance();
    let var_scale = variance_scale(&inst.ps, &inst.spec, &*inst.obs)?;
    let s = normalized_variance(variance, n, var_scale);
    report.measure("variance", variance, None);
    report.measure("s", s, None);
    report.theory("s_max", 4.0);
    report.verdict("s_at_most_4", s <= 4.0, "s", "s_max");

    let mut scales = BTreeMap::new();
    for &t in &theorems {
        match theorem_scale(inst, t)? {
            Some(sc) => {
                report.theory(format!("scale.{}", theorem_key(t)), sc);
                scales.insert(t, sc);
            }
            None if explicit => {
                return Err(Error::invalid(format!("{t:?} needs a - 4 delta > 0")));
            }
            None => {}
        }
    }

    let (tails, mc_values) = match opts.mode {
        LdMode::MonteCarlo => {
            if opts.n_samples < 100 {
                return Err(Error::invalid("need at least 100 samples"));
            }
            let values = mc_centered(&f, &inst.spec, opts.n_samples, opts.seed)?;
            let tails = opts
                .epsilons
                .iter()
                .map(|&e| tail_from_values(&values, e, n).map(|t| (e, t.p_hat, Some(t.ci))))
                .collect::<Result<Vec<_>>>()?;
            (tails, Some(values))
        }
        LdMode::Exact => {
            let dist = enumerate_functional(&f)?;
            dist.check()?;
            let tails: Vec<_> = opts
                .epsilons
                .iter()
                .map(|&e| (e, dist.tail(e * n as f64), None))
                .collect();
            for (&t, &sc) in &scales {
                let mut worst = f64::NEG_INFINITY;
                for v in dist.jump_points() {
                    let eps = v / n as f64;
                    let excess = dist.tail(v) - tail_bound(eps, n, sc, s, t, &opts.params)?;
                    worst = worst.max(excess);
                }
                if worst == f64::NEG_INFINITY {
                    worst = 0.0;
                }
                let ek = format!("exact_max_excess.{}", theorem_key(t));
                report.measure(ek.clone(), worst, None);
                report.theory("excess_limit", 0.0);
                report.verdict(format!("ld_all_jumps.{}", theorem_key(t)), worst <= 0.0, &ek, "excess_limit");
            }
            (tails, None)
        }
    };

    for (eps, p, ci) in tails {
        let ek = format!("tail[eps={eps}]");
        report.measure(ek.clone(), p, ci);
        let observed = ci.map_or(p, |c| c.lo);
        let mut bound_of = BTreeMap::new();
        for (&t, &sc) in &scales {
            let b = tail_bound(eps, n, sc, s, t, &opts.params)?;
            let tk = format!("bound.{}[eps={eps}]", theorem_key(t));
            report.theory(tk.clone(), b);
            report.verdict(format!("ld.{}[eps={eps}]", theorem_key(t)), observed <= b, &ek, &tk);
            bound_of.insert(t, tk);
        }
        let pairs = [(Theorem::AAddition, Theorem::ASimple), (Theorem::BAddition, Theorem::BSimple)];
        for (add, simple) in pairs {
            if let (Some(ka), Some(ks)) = (bound_of.get(&add), bound_of.get(&simple)) {
                if s <= 4.0 {
                    let pass = report.theoretical[ka] <= report.theoretical[ks];
                    report.verdict(format!("addition_le_simple.{}[eps={eps}]", theorem_key(add)), pass, "s", ks);
                }
            }
        }
    }
    Ok(RunOutput {
        report,
        pointset: Some(inst.ps.clone()),
        samples: mc_values,
        text: None,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Minimal slope of the gap against the scale over two decades.
pub const CUBIC_SLOPE_MIN: f64 = 2.9;

/// `|log E exp(X_r(c alpha)) - E X_r(c alpha)^2 / 2| <= n D scale^3` for each
/// target scale `f d`, by exact enumeration; the rescaling factor `c` is
/// chosen so that the relevant norm of `c alpha` equals the target.
pub fn verify_laplace_gap(
    inst: &Instance,
    scale_fractions: &[f64],
    params: &RateParams,
    seed: u64,
    config: serde_json::Value,
) -> Result<RunOutput> {
    let n = inst.ps.len();
    let base = variance_scale(&inst.ps, &inst.spec, &*inst.obs)?;
    if !(base > 0.0) {
        return Err(Error::invalid("the observable has zero scale; nothing to rescale"));
    }
    if let Some(f) = scale_fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::OutOfRegime { scale: f * params.d, d: params.d });
    }
    let f = PairFunctional::new(&inst.ps, &inst.spec, &*inst.obs)?;
    let dist = enumerate_functional(&f)?;
    dist.check()?;
    let mut report = ExperimentReport::new(config, seed);
    report.theory("base_scale", base);
    let mut pts = Vec::new();
    for &frac in scale_fractions {
        let target = frac * params.d;
        let c = target / base;
        let gap = dist.laplace_gap(c)?.abs();
        let bound = laplace_gap_bound(n, target, inst.model(), params)?;
        let ek = format!("gap[scale={target}]");
        let tk = format!("gap_bound[scale={target}]");
        report.measure(ek.clone(), gap, None);
        report.theory(tk.clone(), bound);
        report.verdict(format!("laplace[scale={target}]"), gap <= bound, &ek, &tk);
        pts.push((target, gap));
    }
    let positive: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.0 > 0.0 && p.1 > 0.0).collect();
    if let Some(slope) = loglog_slope(&positive) {
        report.measure("loglog_slope", slope, None);
        let lo = positive.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = positive.iter().map(|p| p.0).fold(0.0, f64::max);
        report.measure("slope_span_decades", (hi / lo).log10(), None);
        if hi / lo >= 100.0 * (1.0 - 1e-12) {
            report.theory("slope_min", CUBIC_SLOPE_MIN);
            report.verdict("cubic_order", slope >= CUBIC_SLOPE_MIN, "loglog_slope", "slope_min");
        }
    }
    Ok(RunOutput {
        report,
        pointset: Some(inst.ps.clone()),
        samples: None,
        text: None,
    })
}

/// Standardized `X_r / sqrt(E X_r^2)` against the standard normal.
pub fn clt_experiment(
    inst: &Instance,
    n_samples: usize,
    thresholds: &crate::config::CltThresholds,
    seed: u64,
    config: serde_json::Value,
) -> Result<RunOutput> {
    let f = PairFunctional::new(&inst.ps, &inst.spec, &*inst.obs)?;
    let variance = f.variance();
    if variance == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let values = mc_centered(&f, &inst.spec, n_samples, seed)?;
    let sd = variance.sqrt();
    let z = values
        .iter()
        .map(|v| {
            if v.im.abs() > 1e-9 * sd {
                Err(Error::NotReal(v.im))
            } else {
                Ok(v.re / sd)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let ks = ks_distance_normal(&z, 0.0, 1.0)?;
    let mo = moments(&z)?;
    let n = inst.ps.len() as f64;
    let mut report = ExperimentReport::new(config, seed);
    report.measure("variance_exact", variance, None);
    report.measure("growth_ratio", variance * n.powf(-2.0 / 3.0), None);
    report.measure("ks", ks, None);
    report.measure("mean", mo.mean, None);
    report.measure("variance_standardized", mo.variance, None);
    report.measure("skewness_abs", mo.skewness.abs(), None);
    report.measure("kurtosis_excess_abs", (mo.kurtosis - 3.0).abs(), None);
    report.theory("ks_max", thresholds.ks);
    report.theory("skewness_max", thresholds.skewness);
    report.theory("kurtosis_excess_max", thresholds.kurtosis);
    report.verdict("ks", ks <= thresholds.ks, "ks", "ks_max");
    report.verdict("skewness", mo.skewness.abs() <= thresholds.skewness, "skewness_abs", "skewness_max");
    report.verdict(
        "kurtosis",
        (mo.kurtosis - 3.0).abs() <= thresholds.kurtosis,
        "kurtosis_excess_abs",
        "kurtosis_excess_max",
    );
    Ok(RunOutput {
        report,
        pointset: Some(inst.ps.clone()),
        samples: Some(values),
        text: None,
    })
}

/// `E X_r^2 n^{-2/3}` along a sequence of volumes; the ratio should grow,
/// and for homogeneous instances `s_r` should stay within 10%.
pub fn verify_variance_growth(
    sets: &[PointSet],
    spec: &ScattererSpec,
    obs: &dyn Observable,
    config: serde_json::Value,
) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(config, 0);
    let mut ratios = Vec::new();
    let mut ss = Vec::new();
    for ps in sets {
        let f = PairFunctional::new(ps, spec, obs)?;
        let v = f.variance();
        let n = ps.len();
        let ratio = v * (n as f64).powf(-2.0 / 3.0);
        let s = normalized_variance(v, n, variance_scale(ps, spec, obs)?);
        report.measure(format!("ratio[n={n}]"), ratio, None);
        report.measure(format!("s[n={n}]"), s, None);
        ratios.push(ratio);
        ss.push(s);
    }
    if sets.len() >= 2 {
        let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
        let first = ratios[0];
        let last = *ratios.last().expect("non-empty");
        report.measure("ratio_growth", if first > 0.0 { last / first } else { 0.0 }, None);
        report.theory("ratio_growth_min", 1.0);
        report.verdict("ratio_increasing", increasing, "ratio_growth", "ratio_growth_min");
        let lo = ss.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ss.iter().copied().fold(0.0, f64::max);
        report.measure("s_spread", if lo > 0.0 { hi / lo - 1.0 } else { f64::INFINITY }, None);
        report.theory("s_spread_max", 0.1);
        report.verdict("s_constant", lo > 0.0 && hi / lo - 1.0 <= 0.1, "s_spread", "s_spread_max");
    }
    Ok(report)
}

/// Norm domination checks over point sets × Gaussian widths × deltas.
pub fn verify_norms(
    sets: &[PointSet],
    sigmas: &[f64],
    delta_fractions: &[f64],
    slack: f64,
    seed: u64,
    config: serde_json::Value,
) -> Result<RunOutput> {
    if let Some(f) = delta_fractions.iter().find(|f| !(**f >= 0.0 && **f < 0.25)) {
        return Err(Error::invalid(format!("delta fraction {f} outside [0, 1/4)")));
    }
    let jobs: Vec<(usize, f64)> = (0..sets.len()).flat_map(|i| sigmas.iter().map(move |&s| (i, s))).collect();
    let results = jobs
        .par_iter()
        .map(|&(i, sigma)| {
            let ps = &sets[i];
            let obs = crate::observables::gaussian(ps.dim(), sigma)?;
            let p3 = check_gamma_domination(&*obs, ps)?;
            let a = verify_min_distance(ps).value();
            let p4 = delta_fractions
                .iter()
                .map(|&fr| check_seminorm_domination(&*obs, ps, fr * a).map(|r| (fr, r)))
                .collect::<Result<Vec<_>>>()?;
            Ok((i, sigma, p3, p4))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = ExperimentReport::new(config, seed);
    let mut count = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for (i, sigma, p3, p4) in results {
        let tag = format!("set{i},sigma={sigma}");
        let mut push = |report: &mut ExperimentReport, key: String, r: &crate::norms::NormCheckReport| {
            let ek = format!("lhs.{key}");
            let tk = format!("rhs.{key}");
            report.measure(ek.clone(), r.lhs, None);
            report.theory(tk.clone(), r.rhs + r.tolerance + slack);
            if let Some(sec) = r.secondary_rhs {
                report.theory(format!("rhs_sharp.{key}"), sec);
            }
            report.verdict(key, r.vacuous || r.lhs <= r.rhs + r.tolerance + slack, &ek, &tk);
            if !r.vacuous {
                worst = worst.max(r.lhs - r.rhs);
            }
            count += 1;
        };
        push(&mut report, format!("gamma_domination[{tag}]"), &p3);
        for (fr, r) in &p4 {
            push(&mut report, format!("seminorm_domination[{tag},delta_frac={fr}]"), r);
        }
    }
    report.measure("instances", count as f64, None);
    report.measure("worst_lhs_minus_rhs", worst, None);
    let labels: Vec<String> = sets.iter().enumerate().map(|(i, p)| format!("set{i}: {} ({} points)", p.label(), p.len())).collect();
    Ok(RunOutput {
        report,
        pointset: None,
        samples: None,
        text: Some(labels.join("\n") + "\n"),
    })
}

/// The recomputed constants with their printed budgets.
pub fn constants_report(params: &RateParams, seed: u64, config: serde_json::Value) -> Result<RunOutput> {
    let t = rates::recompute_constants(params)?;
    let mut report = ExperimentReport::new(config, seed);
    report.measure("d_precise", t.d_precise, None);
    report.theory("d_low", 0.05257);
    report.theory("d_high", 0.05259);
    report.verdict("d_low", t.d_precise >= 0.05257, "d_precise", "d_low");
    report.verdict("d_high", t.d_precise <= 0.05259, "d_precise", "d_high");
    report.theory("D_budget", rates::BIG_D);
    report.theory("D_tilde_budget", rates::BIG_D_TILDE);
    report.theory("leading_low", 4340.0);
    report.theory("leading_high", 4360.0);
    report.theory("middle_budget", 63.0);
    report.theory("last_budget", 124.0);
    report.theory("middle_tilde_budget", 10.0);
    report.theory("last_tilde_budget", 12.0);
    let mut lines = vec![
        format!("{:<26}{:>16}", "lambda*", t.lambda_star),
        format!("{:<26}{:>16}", "a*", t.a_star),
        format!("{:<26}{:>16.12}", "d = log(1+lambda*)/2", t.d_precise),
        format!("{:<26}{:>16}", "d (rounded)", t.d_rounded),
    ];
    for (tag, e) in [("rounded", &t.at_rounded), ("precise", &t.at_precise)] {
        let c = &e.big_d_components;
        let ct = &e.big_d_tilde_components;
        let k = |name: &str| format!("{name}[{tag}]");
        report.measure(k("D"), e.big_d, None);
        report.measure(k("D.leading"), c.leading, None);
        report.measure(k("D.middle"), c.middle, None);
        report.measure(k("D.last"), c.last, None);
        report.measure(k("D_tilde"), e.big_d_tilde, None);
        report.measure(k("D_tilde.middle"), ct.middle, None);
        report.measure(k("D_tilde.last"), ct.last, None);
        report.measure(k("D.grid_sup"), e.big_d_grid_sup, None);
        report.verdict(k("D_le_budget"), e.big_d <= rates::BIG_D, &k("D"), "D_budget");
        report.verdict(k("D_tilde_le_budget"), e.big_d_tilde <= rates::BIG_D_TILDE, &k("D_tilde"), "D_tilde_budget");
        report.verdict(k("leading_low"), c.leading >= 4340.0, &k("D.leading"), "leading_low");
        report.verdict(k("leading_high"), c.leading <= 4360.0, &k("D.leading"), "leading_high");
        report.verdict(k("sup_at_endpoint"), e.sup_at_endpoint, &k("D.grid_sup"), "D_budget");
        lines.push(format!("-- at d = {} ({tag})", e.d));
        lines.push(format!("{:<26}{:>16.3}", "D = h(2d,d)/d^3", e.big_d));
        lines.push(format!("{:<26}{:>16.3}   (~ 4352)", "  leading term", c.leading));
        lines.push(format!("{:<26}{:>16.3}   (<= 63)", "  middle terms", c.middle));
        lines.push(format!("{:<26}{:>16.3}   (<= 124)", "  last term", c.last));
        lines.push(format!("{:<26}{:>16.3}", "D~ = h(2d,0)/d^3", e.big_d_tilde));
        lines.push(format!("{:<26}{:>16.3}   (<= 10)", "  middle terms", ct.middle));
        lines.push(format!("{:<26}{:>16.3}   (<= 12)", "  last term", ct.last));
    }
    Ok(RunOutput {
        report,
        pointset: None,
        samples: None,
        text: Some(lines.join("\n") + "\n"),
    })
}

/// Runs a parsed command. The report's `config` echoes the command with
/// every default expanded and the seed made explicit.
pub fn run(command: &Command, seed: u64) -> Result<RunOutput> {
    let mut params = command.parameters();
    // generators that draw randomness record the seed they used
    let resolve = |p: &PointSetConfig| serde_json::to_value(p.resolved(seed)).expect("serializes");
    if let Some(obj) = params.as_object_mut() {
        if let Some(ps) = obj.get("pointset").cloned() {
            let cfg: PointSetConfig = serde_json::from_value(ps).expect("round trip");
            obj.insert("pointset".into(), resolve(&cfg));
        }
        if let Some(list) = obj.get("pointsets").cloned() {
            let cfgs: Vec<PointSetConfig> = serde_json::from_value(list).expect("round trip");
            obj.insert("pointsets".into(), cfgs.iter().map(resolve).collect());
        }
    }
    let config = serde_json::json!({
        "command": command.name(),
        "parameters": params,
        "seed": seed,
    });
    match command {
        Command::GenPointset(p) => {
            let ps = p.pointset.build(seed)?;
            let md = verify_min_distance(&ps);
            let mut report = ExperimentReport::new(config, seed);
            report.measure("points", ps.len() as f64, None);
            report.measure("min_dist_declared", ps.min_dist(), None);
            let exact = exact_min_distance(&ps);
            report.theory("min_dist_exact", exact);
            report.verdict("min_dist_certified", md.is_single_point() || ps.min_dist() <= exact, "min_dist_declared", "min_dist_exact");
            Ok(RunOutput {
                report,
                pointset: Some(ps),
                samples: None,
                text: None,
            })
        }
        Command::Constants(p) => constants_report(&p.d.params(), seed, config),
        Command::RunLd(p) => run_ld(p, seed, config),
        Command::RunClt(p) => run_clt(p, seed, config),
        Command::VerifyNorms(p) => run_norms(p, seed, config),
        Command::VerifyLaplace(p) => run_laplace(p, seed, config),
    }
}

fn exact_min_distance(ps: &PointSet) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..ps.len() {
        for j in i + 1..ps.len() {
            best = best.min(crate::pointset::dist(ps.point(i), ps.point(j)));
        }
    }
    best
}

fn run_ld(p: &RunLdParams, seed: u64, config: serde_json::Value) -> Result<RunOutput> {
    let inst = Instance::from_config(&p.pointset, &p.scatterers, &p.observable, seed)?;
    verify_ld_bound(
        &inst,
        &LdOptions {
            epsilons: &p.epsilons,
            n_samples: p.n_samples,
            mode: p.mode,
            theorems: &p.theorems,
            params: p.d.params(),
            seed,
        },
        config,
    )
}

fn run_clt(p: &RunCltParams, seed: u64, config: serde_json::Value) -> Result<RunOutput> {
    let inst = Instance::from_config(&p.pointset, &p.scatterers, &p.observable, seed)?;
    clt_experiment(&inst, p.n_samples, &p.thresholds, seed, config)
}

fn run_norms(p: &VerifyNormsParams, seed: u64, config: serde_json::Value) -> Result<RunOutput> {
    let sets = p.pointsets.iter().map(|c| c.build(seed)).collect::<Result<Vec<_>>>()?;
    verify_norms(&sets, &p.sigmas, &p.delta_fractions, p.slack, seed, config)
}

fn run_laplace(p: &VerifyLaplaceParams, seed: u64, config: serde_json::Value) -> Result<RunOutput> {
    let inst = Instance::from_config(&p.pointset, &p.scatterers, &p.observable, seed)?;
    verify_laplace_gap(&inst, &p.scale_fractions, &p.d.params(), seed, config)
}

/// Convenience for tests and examples: a shared Gaussian observable.
pub fn gaussian_instance(ps: PointSet, spec: ScattererSpec, sigma: f64) -> Result<Instance> {
    let obs: SharedObservable = Arc::new(crate::observables::GaussianObservable::new(ps.dim(), sigma)?);
    Instance::new(ps, spec, obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointset::lattice;
    use crate::scatterers::{AmplitudeSpec, DislocationSpec};
    use approx::assert_abs_diff_eq;

    fn line(p: &[f64]) -> PointSet {
        let v: Vec<Vec<f64>> = p.iter().map(|&x| vec![x]).collect();
        PointSet::from_points(&v, "line").unwrap()
    }

    fn bern() -> ScattererSpec {
        ScattererSpec::Amplitudes(AmplitudeSpec::bernoulli_pm1())
    }

    #[test]
    fn enumeration_examples() {
        let g = crate::observables::gaussian(1, 1.0).unwrap();
        let det = ScattererSpec::Amplitudes(AmplitudeSpec::constant(Complex64::new(1.0, 0.0)));
        let d = enumerate_exact(&line(&[0.0, 1.0]), &det, &*g).unwrap();
        assert_eq!(d.outcomes.len(), 1);
        assert_eq!(d.outcomes[0].probability, 1.0);
        assert_abs_diff_eq!(d.outcomes[0].value.norm(), 0.0, epsilon = 1e-15);
        let ps = line(&[0.0, 1.0]);
        let d = enumerate_exact(&ps, &bern(), &*g).unwrap();
        d.check().unwrap();
        assert_eq!(d.outcomes.len(), 4);
        let mut vals: Vec<f64> = d.outcomes.iter().map(|o| o.value.re).collect();
        vals.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(vals[0], -vals[3], epsilon = 1e-15);
        let ps3 = line(&[0.0, 1.0, 2.0]);
        let d3 = enumerate_exact(&ps3, &bern(), &*g).unwrap();
        let v = crate::correlation::exact_variance(&ps3, &bern(), &*g).unwrap();
        assert_abs_diff_eq!(d3.second_moment(), v.variance, epsilon = 1e-12);
        let big = lattice(1, 1.0, 10.5).unwrap();
        assert!(matches!(enumerate_exact(&big, &bern(), &*g), Err(Error::EnumerationTooLarge { .. })));
    }

    #[test]
    fn mc_tail_examples() {
        let g = crate::observables::gaussian(1, 1.0).unwrap();
        let ps = line(&[0.0, 1.0, 2.0]);
        let t0 = mc_tail(&ps, &bern(), &*g, 0.0, 1000, 1).unwrap();
        assert_eq!(t0.p_hat, 1.0);
        let exact = enumerate_exact(&ps, &bern(), &*g).unwrap();
        let jumps = exact.jump_points();
        // probes between the outcome gaps
        let mut probes = vec![jumps[0] / 2.0];
        probes.extend(jumps.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        for v in probes {
            let eps = v / 3.0;
            let t = mc_tail(&ps, &bern(), &*g, eps, 4000, 2).unwrap();
            let p = exact.tail(v);
            assert!(t.ci.lo <= p && p <= t.ci.hi, "{eps}: {p} outside {:?}", t.ci);
        }
        let a = mc_tail(&ps, &bern(), &*g, probes_first(&exact), 1000, 3).unwrap();
        let b = mc_tail(&ps, &bern(), &*g, probes_first(&exact), 4000, 3).unwrap();
        assert!(b.ci.hi - b.ci.lo < a.ci.hi - a.ci.lo);
    }

    fn probes_first(d: &ExactDistribution) -> f64 {
        d.jump_points()[0] / 2.0 / 3.0
    }

    #[test]
    fn mc_is_thread_independent() {
        let g = crate::observables::gaussian(1, 1.0).unwrap();
        let ps = lattice(1, 1.0, 8.0).unwrap();
        let f = PairFunctional::new(&ps, &bern(), &*g).unwrap();
        let a = mc_centered(&f, &bern(), 300, 11).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| mc_centered(&f, &bern(), 300, 11).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn laplace_gap_examples() {
        let ps = line(&[0.0, 1.0]);
        let inst = gaussian_instance(ps, bern(), 1.0).unwrap();
        let p = RateParams::rounded();
        let out = verify_laplace_gap(&inst, &[0.0, 1.0], &p, 0, serde_json::Value::Null).unwrap();
        assert!(out.report.all_pass(), "{:?}", out.report.failures());
        assert_eq!(out.report.empirical["gap[scale=0]"].value, 0.0);
        let bound = out.report.theoretical[&format!("gap_bound[scale={}]", p.d)];
        assert_abs_diff_eq!(bound, 2.0 * p.big_d * p.d.powi(3), epsilon = 1e-12);
        assert!(verify_laplace_gap(&inst, &[1.5], &p, 0, serde_json::Value::Null).is_err());
    }

    #[test]
    fn laplace_gap_is_cubic() {
        let ps = line(&[0.0, 1.0, 2.0, 3.0, 4.5]);
        let inst = gaussian_instance(ps, bern(), 1.0).unwrap();
        let fr = [1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01];
        let out = verify_laplace_gap(&inst, &fr, &RateParams::rounded(), 0, serde_json::Value::Null).unwrap();
        assert!(out.report.all_pass(), "{:?}", out.report.failures());
        assert!(out.report.verdicts.contains_key("cubic_order"));
    }

    #[test]
    fn log_laplace_stable_forms() {
        for y in [-2.0f64, -0.4, -1e-3, 0.0, 1e-3, 0.4, 2.0] {
            let direct = y.exp() - 1.0 - y - y * y / 2.0;
            assert_abs_diff_eq!(exp_remainder3(y), direct, epsilon = 1e-12);
        }
        for u in [-0.2f64, 0.0, 1e-4, 0.2, 3.0] {
            assert_abs_diff_eq!(log_remainder(u), u - u.ln_1p(), epsilon = 1e-15);
        }
    }

    #[test]
    fn ld_exact_mode_passes() {
        let ps = line(&[0.0, 1.0, 2.0, 3.0]);
        let inst = gaussian_instance(ps, bern(), 1.0).unwrap();
        let out = verify_ld_bound(
            &inst,
            &LdOptions {
                epsilons: &[0.05, 0.1, 0.5],
                n_samples: 0,
                mode: LdMode::Exact,
                theorems: &[],
                params: RateParams::rounded(),
                seed: 0,
            },
            serde_json::Value::Null,
        )
        .unwrap();
        assert!(out.report.all_pass(), "{:?}", out.report.failures());
        assert!(out.report.verdicts.contains_key("ld_all_jumps.a_simple"));
    }

    #[test]
    fn clt_rejects_deterministic() {
        let ps = line(&[0.0, 1.0]);
        let det = ScattererSpec::Amplitudes(AmplitudeSpec::constant(Complex64::new(1.0, 0.0)));
        let inst = gaussian_instance(ps, det, 1.0).unwrap();
        let r = clt_experiment(&inst, 100, &Default::default(), 0, serde_json::Value::Null);
        assert!(matches!(r, Err(Error::ZeroVariance)));
    }

    #[test]
    fn variance_growth_examples() {
        let g = crate::observables::gaussian(1, 1.0).unwrap();
        let sets: Vec<PointSet> = [15.5, 63.5].iter().map(|&r| lattice(1, 1.0, r).unwrap()).collect();
        let rep = verify_variance_growth(&sets, &bern(), &*g, serde_json::Value::Null).unwrap();
        assert!(rep.verdicts["ratio_increasing"].pass);
        let det = ScattererSpec::Amplitudes(AmplitudeSpec::constant(Complex64::new(1.0, 0.0)));
        let rep = verify_variance_growth(&sets, &det, &*g, serde_json::Value::Null).unwrap();
        assert!(!rep.verdicts["ratio_increasing"].pass);
        // a wide kernel sums to a near-constant over the lattice, which hides
        // the linear growth until n ~ 10^3; a narrow one does not
        let narrow = crate::observables::gaussian(1, 4.0).unwrap();
        let b = ScattererSpec::Dislocations(DislocationSpec::two_point(1, 0.125).unwrap());
        let rep = verify_variance_growth(&sets, &b, &*narrow, serde_json::Value::Null).unwrap();
        assert!(rep.verdicts["ratio_increasing"].pass);
    }
}
