//! Cluster-expansion constants and rate functions.
//!
//! `J` is the universal large-deviation rate; `j(.; s)` is its refinement
//! that uses a measured normalized variance `s` in place of the worst case
//! `s = 4`, so that `J = j(.; 4)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scatterers::Model;

pub const LAMBDA_STAR: f64 = 0.110909;
pub const A_STAR: f64 = 0.633;
pub const D_ROUNDED: f64 = 0.0525;
pub const BIG_D: f64 = 4540.0;
pub const BIG_D_TILDE: f64 = 4380.0;

/// `d = log(1 + lambda*) / 2`.
pub fn d_from_lambda(lambda_star: f64) -> f64 {
    0.5 * lambda_star.ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub lambda_star: f64,
    pub a_star: f64,
    pub d: f64,
    #[serde(rename = "D")]
    pub big_d: f64,
    #[serde(rename = "D_tilde")]
    pub big_d_tilde: f64,
}

impl RateParams {
    /// Rounded `d = 0.0525` with the default `D`, `D~`.
    pub fn rounded() -> Self {
        RateParams {
            lambda_star: LAMBDA_STAR,
            a_star: A_STAR,
            d: D_ROUNDED,
            big_d: BIG_D,
            big_d_tilde: BIG_D_TILDE,
        }
    }

    /// `d = log(1 + lambda*) / 2` at full precision with the default `D`, `D~`.
    pub fn precise() -> Self {
        RateParams {
            d: d_from_lambda(LAMBDA_STAR),
            ..Self::rounded()
        }
    }

    pub fn for_model(&self, model: Model) -> f64 {
        match model {
            Model::A => self.big_d,
            Model::B => self.big_d_tilde,
        }
    }

    /// Checks that `d` lies inside the convergence region, that `D` and `D~`
    /// dominate `h(2d, d) / d^3` and `h(2d, 0) / d^3`, and that `D~ <= D`.
    pub fn validate(&self) -> Result<()> {
        let fin = [self.lambda_star, self.a_star, self.d, self.big_d, self.big_d_tilde];
        if fin.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Constants("all constants must be positive and finite".into()));
        }
        if self.d > d_from_lambda(self.lambda_star) * (1.0 + 1e-12) {
            return Err(Error::Constants(format!(
                "d = {} exceeds log(1 + lambda*)/2 = {}",
                self.d,
                d_from_lambda(self.lambda_star)
            )));
        }
        let d3 = self.d.powi(3);
        let need_d = h(2.0 * self.d, self.d, self)? / d3;
        let need_dt = h(2.0 * self.d, 0.0, self)? / d3;
        if self.big_d < need_d * (1.0 - 1e-6) {
            return Err(Error::Constants(format!("D = {} below h(2d,d)/d^3 = {need_d}", self.big_d)));
        }
        if self.big_d_tilde < need_dt * (1.0 - 1e-6) {
            return Err(Error::Constants(format!(
                "D~ = {} below h(2d,0)/d^3 = {need_dt}",
                self.big_d_tilde
            )));
        }
        if self.big_d_tilde > self.big_d {
            return Err(Error::Constants("D~ must not exceed D".into()));
        }
        Ok(())
    }
}

impl Default for RateParams {
    fn default() -> Self {
        Self::rounded()
    }
}

/// `g_l(s) = sum_{i >= l} s^i / i!`.
pub fn g_series(l: u32, s: f64) -> f64 {
    if l == 0 {
        return s.exp();
    }
    if s <= 50.0 {
        // the tail directly: no cancellation against e^s
        let mut term = (1..=l).fold(1.0, |t, i| t * s / i as f64);
        let mut sum = 0.0;
        let mut i = l;
        while term != 0.0 {
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            i += 1;
            term *= s / i as f64;
        }
        return sum;
    }
    let mut head = 0.0;
    let mut term = 1.0;
    for i in 0..l {
        head += term;
        term *= s / (i + 1) as f64;
    }
    s.exp() - head
}

/// `l(x) = -log(1 - x) - x = sum_{k >= 2} x^k / k` for `0 <= x < 1`.
pub fn l_series(x: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::Domain { func: "l", value: x });
    }
    if x < 0.25 {
        let mut pow = x * x;
        let mut sum = 0.0;
        let mut k = 2.0;
        while pow / k > sum * 1e-17 && pow != 0.0 {
            sum += pow / k;
            pow *= x;
            k += 1.0;
        }
        return Ok(sum);
    }
    Ok(-(-x).ln_1p() - x)
}

/// The thirteen terms of `h(u, v)` in printed order, plus the grouping
/// into leading term, middle terms and last term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HBreakdown {
    pub terms: [f64; 13],
    pub leading: f64,
    pub middle: f64,
    pub last: f64,
    pub total: f64,
}

impl HBreakdown {
    pub fn scaled(&self, factor: f64) -> HBreakdown {
        HBreakdown {
            terms: self.terms.map(|t| t * factor),
            leading: self.leading * factor,
            middle: self.middle * factor,
            last: self.last * factor,
            total: self.total * factor,
        }
    }
}

/// Error function of the truncated cluster expansion, term by term.
pub fn h_breakdown(u: f64, v: f64, params: &RateParams) -> Result<HBreakdown> {
    if !(u >= 0.0) || !(v >= 0.0) {
        return Err(Error::invalid(format!("h needs u, v >= 0, got ({u}, {v})")));
    }
    let (ls, as_) = (params.lambda_star, params.a_star);
    let g1 = |s| g_series(1, s);
    let g2 = |s| g_series(2, s);
    let g3 = |s| g_series(3, s);
    let e2v = (2.0 * v).exp();
    let e3v = (3.0 * v).exp();
    let bracket = 2.0 * v * g1(2.0 * v) + g2(2.0 * v) * e2v;
    let inner = u * g1(2.0 * v) * e2v + g2(u);
    let ctx = |e: Error| match e {
        Error::Domain { value, .. } => Error::Domain { func: "h", value },
        other => other,
    };
    let terms = [
        as_ / ls.powi(3) * g1(u).powi(3),
        l_series(g2(v)).map_err(ctx)?,
        g3(v),
        0.5 * u * bracket,
        0.25 * u * u * g1(2.0 * v) * (1.0 + e2v),
        0.5 * g3(u),
        2.0 * u * g2(u),
        g2(u).powi(2),
        2.0 * u * bracket,
        0.5 * u * u * g1(3.0 * v) * (1.0 + e3v),
        0.5 * l_series(inner).map_err(ctx)?,
        l_series(g1(u).powi(2)).map_err(ctx)?,
        as_ / ls.powi(2) * inner.powi(2),
    ];
    let leading = terms[0];
    let last = terms[12];
    let middle: f64 = terms[1..12].iter().sum();
    Ok(HBreakdown {
        terms,
        leading,
        middle,
        last,
        total: leading + middle + last,
    })
}

pub fn h(u: f64, v: f64, params: &RateParams) -> Result<f64> {
    Ok(h_breakdown(u, v, params)?.total)
}

/// `D(d)` or `D~(d)` evaluated at one `d`, with the grid supremum check.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantEval {
    pub d: f64,
    #[serde(rename = "D")]
    pub big_d: f64,
    #[serde(rename = "D_components")]
    pub big_d_components: HBreakdown,
    #[serde(rename = "D_grid_sup")]
    pub big_d_grid_sup: f64,
    #[serde(rename = "D_tilde")]
    pub big_d_tilde: f64,
    #[serde(rename = "D_tilde_components")]
    pub big_d_tilde_components: HBreakdown,
    #[serde(rename = "D_tilde_grid_sup")]
    pub big_d_tilde_grid_sup: f64,
    /// Grid supremum attained at the right endpoint for both ratios.
    pub sup_at_endpoint: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsTable {
    pub lambda_star: f64,
    pub a_star: f64,
    pub d_precise: f64,
    pub d_rounded: f64,
    pub at_rounded: ConstantEval,
    pub at_precise: ConstantEval,
    /// `d` at full precision with `D`, `D~` set to their recomputed values.
    pub refreshed: RateParams,
}

const GRID_POINTS: usize = 1000;

fn evaluate_at(d: f64, params: &RateParams) -> Result<ConstantEval> {
    let d3 = d.powi(3);
    let dc = h_breakdown(2.0 * d, d, params)?.scaled(1.0 / d3);
    let dtc = h_breakdown(2.0 * d, 0.0, params)?.scaled(1.0 / d3);
    let (mut sup_d, mut sup_dt) = (0.0f64, 0.0f64);
    let lo = d * 1e-6;
    for i in 0..GRID_POINTS {
        let x = lo * (d / lo).powf(i as f64 / GRID_POINTS as f64);
        let x3 = x.powi(3);
        sup_d = sup_d.max(h(2.0 * x, x, params)? / x3);
        sup_dt = sup_dt.max(h(2.0 * x, 0.0, params)? / x3);
    }
    sup_d = sup_d.max(dc.total);
    sup_dt = sup_dt.max(dtc.total);
    let tol = 1e-9;
    let ok = sup_d <= dc.total * (1.0 + tol) && sup_dt <= dtc.total * (1.0 + tol);
    if !ok {
        return Err(Error::Constants(format!(
            "grid supremum exceeds endpoint value at d = {d}: {sup_d} vs {}, {sup_dt} vs {}",
            dc.total, dtc.total
        )));
    }
    Ok(ConstantEval {
        d,
        big_d: dc.total,
        big_d_components: dc,
        big_d_grid_sup: sup_d,
        big_d_tilde: dtc.total,
        big_d_tilde_components: dtc,
        big_d_tilde_grid_sup: sup_dt,
        sup_at_endpoint: ok,
    })
}

/// Recomputes `d` from `lambda*` and the suprema `D`, `D~` at both the
/// rounded and the precise `d`.
pub fn recompute_constants(params: &RateParams) -> Result<ConstantsTable> {
    let d_precise = d_from_lambda(params.lambda_star);
    let at_rounded = evaluate_at(D_ROUNDED.min(d_precise), params)?;
    let at_precise = evaluate_at(d_precise, params)?;
    Ok(ConstantsTable {
        lambda_star: params.lambda_star,
        a_star: params.a_star,
        d_precise,
        d_rounded: D_ROUNDED,
        refreshed: RateParams {
            d: d_precise,
            big_d: at_precise.big_d,
            big_d_tilde: at_precise.big_d_tilde,
            ..*params
        },
        at_rounded,
        at_precise,
    })
}

/// `(1 + x)^{3/2} - 1 - 3x/2` without cancellation for small `x`.
fn three_halves_remainder(x: f64) -> f64 {
    let y = x / (1.0 + (1.0 + x).sqrt());
    y * y * (1.5 + y)
}

/// Universal rate `J`. At the branch point the small-argument formula is used.
pub fn rate_j_universal(eps_bar: f64, params: &RateParams) -> f64 {
    rate_big_j(eps_bar, params.d, params.big_d)
}

/// `J` with explicit `d`, `D`.
pub fn rate_big_j(eps_bar: f64, d: f64, big_d: f64) -> f64 {
    if eps_bar <= d * (4.0 + 3.0 * big_d * d) {
        16.0 / (27.0 * big_d * big_d) * three_halves_remainder(0.75 * big_d * eps_bar)
    } else {
        d * (eps_bar - d * (2.0 + d * big_d))
    }
}

/// `j_{d,D}(eps_bar; s) = sup_{0 <= t <= d} (eps_bar t - s t^2 / 2 - D t^3)`
/// in closed form.
pub fn rate_j(eps_bar: f64, s: f64, d: f64, big_d: f64) -> f64 {
    if eps_bar <= d * (s + 3.0 * big_d * d) {
        if s == 0.0 {
            (12.0 * big_d * eps_bar).powf(1.5) / (108.0 * big_d * big_d)
        } else {
            s.powi(3) * three_halves_remainder(12.0 * big_d * eps_bar / (s * s)) / (108.0 * big_d * big_d)
        }
    } else {
        d * (eps_bar - d * (0.5 * s + d * big_d))
    }
}

/// Maximizing `t` of the variational form.
pub fn rate_j_argmax(eps_bar: f64, s: f64, d: f64, big_d: f64) -> f64 {
    let t = (-s + (s * s + 12.0 * big_d * eps_bar).sqrt()) / (6.0 * big_d);
    t.min(d)
}

/// Brute-force supremum of the variational form over `points` equally
/// spaced `t` in `[0, d]`.
pub fn rate_j_grid(eps_bar: f64, s: f64, d: f64, big_d: f64, points: usize) -> f64 {
    (0..points)
        .map(|i| {
            let t = d * i as f64 / (points - 1) as f64;
            eps_bar * t - 0.5 * s * t * t - big_d * t.powi(3)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// Amplitudes, scale `K ||alpha||_{nu,a}`, rate `J` with `D`.
    ASimple,
    /// Amplitudes, scale `K ||alpha||_Gamma`, rate `j(.; s_r)` with `D`.
    AAddition,
    /// Dislocations, scale `4 delta ||d alpha||_{nu,a-4delta}`, rate `J` with `D~`.
    BSimple,
    /// Dislocations, scale `||alpha||_{Gamma,delta}`, rate `j(.; q_r)` with `D~`.
    BAddition,
}

impl Theorem {
    pub fn model(self) -> Model {
        match self {
            Theorem::ASimple | Theorem::AAddition => Model::A,
            Theorem::BSimple | Theorem::BAddition => Model::B,
        }
    }

    pub fn uses_variance(self) -> bool {
        matches!(self, Theorem::AAddition | Theorem::BAddition)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub epsilon: f64,
    pub cardinality: usize,
    pub scale: f64,
    /// Normalized variance; ignored (forced to 4) by the simple forms.
    pub s: f64,
}

/// Rate entering the exponent, `rate(epsilon / scale)`.
pub fn ld_rate(inputs: &BoundInputs, which: Theorem, params: &RateParams) -> Result<f64> {
    if !(inputs.scale > 0.0) || !inputs.scale.is_finite() {
        return Err(Error::invalid(format!("scale must be positive, got {}", inputs.scale)));
    }
    if !(inputs.epsilon >= 0.0) {
        return Err(Error::invalid(format!("epsilon must be >= 0, got {}", inputs.epsilon)));
    }
    if inputs.cardinality == 0 {
        return Err(Error::invalid("cardinality must be positive"));
    }
    let s = if which.uses_variance() {
        if !(0.0..=4.0 + 1e-9).contains(&inputs.s) {
            return Err(Error::invalid(format!("normalized variance {} outside [0, 4]", inputs.s)));
        }
        inputs.s.min(4.0)
    } else {
        4.0
    };
    let eps_bar = inputs.epsilon / inputs.scale;
    Ok(rate_j(eps_bar, s, params.d, params.for_model(which.model())))
}

/// `min(2, 2 exp(-|Gamma_r| rate(epsilon / scale)))`.
pub fn ld_bound(inputs: &BoundInputs, which: Theorem, params: &RateParams) -> Result<f64> {
    let rate = ld_rate(inputs, which, params)?;
    Ok((2.0 * (-(inputs.cardinality as f64) * rate).exp()).min(2.0))
}

/// `|Gamma_r| D scale^3` (with `D~` for dislocations); refuses when
/// `scale > d`, where the expansion is not known to converge.
pub fn laplace_gap_bound(cardinality: usize, scale: f64, model: Model, params: &RateParams) -> Result<f64> {
    if !(scale >= 0.0) {
        return Err(Error::invalid(format!("scale must be >= 0, got {scale}")));
    }
    if scale > params.d {
        return Err(Error::OutOfRegime { scale, d: params.d });
    }
    Ok(cardinality as f64 * params.for_model(model) * scale.powi(3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn g_and_l_examples() {
        assert_eq!(g_series(1, 0.0), 0.0);
        assert_relative_eq!(g_series(1, 0.3), 0.3f64.exp_m1(), max_relative = 1e-15);
        assert_abs_diff_eq!(g_series(2, 1.0), std::f64::consts::E - 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g_series(1, 2.0 * d_from_lambda(LAMBDA_STAR)), LAMBDA_STAR, epsilon = 1e-12);
        assert_relative_eq!(g_series(3, 60.0), 60f64.exp() - 1.0 - 60.0 - 1800.0, max_relative = 1e-14);
        assert_eq!(l_series(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(l_series(0.5).unwrap(), 2f64.ln() - 0.5, epsilon = 1e-15);
        for x in [0.01f64, 0.1, 0.2, 0.3] {
            let oracle: f64 = (2..=40).map(|k| x.powi(k) / k as f64).sum();
            assert_abs_diff_eq!(l_series(x).unwrap(), oracle, epsilon = 1e-12);
        }
        assert!(l_series(1.0).is_err());
        assert!(l_series(-0.1).is_err());
    }

    #[test]
    fn h_examples() {
        let p = RateParams::rounded();
        assert_eq!(h(0.0, 0.0, &p).unwrap(), 0.0);
        let d = p.d;
        let b = h_breakdown(2.0 * d, d, &p).unwrap().scaled(d.powi(-3));
        assert!(b.total <= 4540.0, "{}", b.total);
        assert!(b.leading <= 4352.0 * 1.001);
        assert!(b.middle <= 63.0 * 1.01 && b.last <= 124.0 * 1.01, "{b:?}");
        let bt = h_breakdown(2.0 * d, 0.0, &p).unwrap().scaled(d.powi(-3));
        assert!(bt.total <= 4380.0, "{}", bt.total);
        assert!(bt.middle <= 10.0 * 1.05 && bt.last <= 12.0 * 1.05, "{bt:?}");
        // the leading term is a*/d^3 at the precise d, since g1(2d) = lambda*
        let pp = RateParams::precise();
        let lead = h_breakdown(2.0 * pp.d, pp.d, &pp).unwrap().leading / pp.d.powi(3);
        assert_relative_eq!(lead, A_STAR / pp.d.powi(3), max_relative = 1e-12);
    }

    #[test]
    fn constants_table() {
        let t = recompute_constants(&RateParams::rounded()).unwrap();
        assert_abs_diff_eq!(t.d_precise, 0.5 * 1.110909f64.ln(), epsilon = 1e-16);
        assert_abs_diff_eq!(t.d_precise, 0.05258, epsilon = 1e-5);
        for e in [&t.at_rounded, &t.at_precise] {
            assert!(e.big_d > 4300.0 && e.big_d <= 4540.0, "{}", e.big_d);
            assert!(e.big_d_tilde <= 4380.0);
            assert!(e.sup_at_endpoint);
        }
        RateParams::rounded().validate().unwrap();
        RateParams::precise().validate().unwrap();
    }

    #[test]
    fn big_j_examples() {
        let p = RateParams::rounded();
        assert_eq!(rate_j_universal(0.0, &p), 0.0);
        let e: f64 = 1e-8;
        assert_abs_diff_eq!(rate_j_universal(e, &p) / (e * e / 8.0), 1.0, epsilon = 1e-4);
        let star = p.d * (4.0 + 3.0 * p.big_d * p.d);
        assert_abs_diff_eq!(star, 37.75, epsilon = 0.01);
        let small = 16.0 / (27.0 * p.big_d.powi(2)) * three_halves_remainder(0.75 * p.big_d * star);
        let large = p.d * (star - p.d * (2.0 + p.d * p.big_d));
        assert_relative_eq!(small, large, max_relative = 1e-10);
    }

    #[test]
    fn small_j_examples() {
        let (d, dd) = (D_ROUNDED, BIG_D);
        for s in [0.0, 0.5, 4.0] {
            assert_eq!(rate_j(0.0, s, d, dd), 0.0);
        }
        for i in 0..200 {
            let e = 60.0 * i as f64 / 199.0;
            let (a, b) = (rate_j(e, 4.0, d, dd), rate_big_j(e, d, dd));
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{e}: {a} vs {b}");
        }
        for i in 0..20 {
            let e = 0.05 * 1.5f64.powi(i);
            for s in [0.0, 0.5, 1.0, 2.0, 4.0] {
                let c = rate_j(e, s, d, dd);
                let g = rate_j_grid(e, s, d, dd, 100_000);
                assert_abs_diff_eq!(c, g, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn ld_bound_examples() {
        let p = RateParams::rounded();
        let inp = |eps, n, s| BoundInputs { epsilon: eps, cardinality: n, scale: 0.02, s };
        assert_eq!(ld_bound(&inp(0.0, 100, 4.0), Theorem::ASimple, &p).unwrap(), 2.0);
        let simple = ld_bound(&inp(0.01, 100, 4.0), Theorem::ASimple, &p).unwrap();
        let add = ld_bound(&inp(0.01, 100, 1.0), Theorem::AAddition, &p).unwrap();
        assert!(add <= simple);
        assert!(ld_bound(&BoundInputs { scale: 0.0, ..inp(0.01, 1, 4.0) }, Theorem::BSimple, &p).is_err());
        assert!(ld_bound(&inp(0.01, 1, 5.0), Theorem::BAddition, &p).is_err());
    }

    #[test]
    fn laplace_gap_examples() {
        let p = RateParams::rounded();
        assert_eq!(laplace_gap_bound(10, 0.0, Model::A, &p).unwrap(), 0.0);
        assert_eq!(laplace_gap_bound(10, p.d, Model::A, &p).unwrap(), 10.0 * p.big_d * p.d.powi(3));
        assert!(laplace_gap_bound(10, 0.01, Model::B, &p).unwrap() <= laplace_gap_bound(10, 0.01, Model::A, &p).unwrap());
        assert!(matches!(laplace_gap_bound(10, 0.06, Model::A, &p), Err(Error::OutOfRegime { .. })));
    }
}
