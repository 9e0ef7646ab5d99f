//! Norms of an observable `alpha` relative to a point set `Gamma`:
//!
//! * `||alpha||_Gamma = sup_x sum_z |alpha(x - z)|` (diagonal included),
//! * the seminorm `||alpha||_{Gamma,delta} = sup_x sum_{y != x} osc`, where
//!   `osc` is the oscillation of `alpha` over the ball `B_{2 delta}(x - y)`,
//! * the Sobolev-type norm
//!   `||g||_{nu,a} = |B_1|^-1 sum_{k<=nu} (1/k!) (2/a)^{nu-k} int ||d^k g||`,
//! * `||dg||_{nu,a}`, the same with every derivative order raised by one.
//!
//! The norms are taken over the finite set itself; no infinite mother set
//! is involved.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::observables::{derivative_norm, Observable};
use crate::pointset::{verify_min_distance, PointSet};
use crate::quadrature::{integrate, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    ExactSum,
    Quadrature,
    GridSupremum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormValue {
    pub value: f64,
    pub method: NormMethod,
    /// Estimated numerical error.
    pub tolerance: f64,
}

/// Volume of the unit ball, `pi^{nu/2} / Gamma(nu/2 + 1)`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    // V_0 = 1, V_1 = 2, V_n = 2 pi / n V_{n-2}
    let mut v = if dim.is_multiple_of(2) { 1.0 } else { 2.0 };
    let mut n = if dim.is_multiple_of(2) { 2 } else { 3 };
    while n <= dim {
        v *= 2.0 * PI / n as f64;
        n += 2;
    }
    v
}

fn diff(x: &[f64], z: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(z) {
        *o = a - b;
    }
}

fn check_dims(obs: &dyn Observable, ps: &PointSet) -> Result<()> {
    if obs.dim() != ps.dim() {
        return Err(Error::invalid(format!(
            "observable dimension {} does not match point set dimension {}",
            obs.dim(),
            ps.dim()
        )));
    }
    Ok(())
}

/// `sup_{x in Gamma} sum_{z in Gamma} |alpha(x - z)|` by a direct double loop.
pub fn gamma_norm(obs: &dyn Observable, ps: &PointSet) -> Result<NormValue> {
    check_dims(obs, ps)?;
    let dim = ps.dim();
    let value = (0..ps.len())
        .into_par_iter()
        .map(|i| {
            let x = ps.point(i);
            let mut buf = vec![0.0; dim];
            let mut row = 0.0;
            for z in ps.points() {
                diff(x, z, &mut buf);
                row += obs.eval_x(&buf).norm();
            }
            row
        })
        .reduce(|| 0.0, f64::max);
    Ok(NormValue {
        value,
        method: NormMethod::ExactSum,
        tolerance: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeminormMethod {
    /// Closed-form ball oscillation when the observable offers one,
    /// grid search otherwise.
    Auto,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeminormOptions {
    pub method: SeminormMethod,
    /// Largest allowed change of the result under grid refinement,
    /// relative to the result.
    pub rel_tol: f64,
}

impl Default for SeminormOptions {
    fn default() -> Self {
        SeminormOptions {
            method: SeminormMethod::Auto,
            rel_tol: 1e-3,
        }
    }
}

/// Points of a product grid with `m` nodes per axis inside the ball of
/// radius `rho`; in two dimensions `4m` boundary points are added.
fn ball_grid(dim: usize, rho: f64, m: usize) -> Vec<Vec<f64>> {
    let step = 2.0 * rho / (m - 1) as f64;
    let node = |i: usize| -rho + step * i as f64;
    let mut pts = Vec::new();
    let mut idx = vec![0usize; dim];
    loop {
        let p: Vec<f64> = idx.iter().map(|&i| node(i)).collect();
        if p.iter().map(|c| c * c).sum::<f64>() <= rho * rho * (1.0 + 1e-12) {
            pts.push(p);
        }
        let mut k = 0;
        while k < dim {
            idx[k] += 1;
            if idx[k] < m {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == dim {
            break;
        }
    }
    if dim == 2 {
        for j in 0..4 * m {
            let th = 2.0 * PI * j as f64 / (4 * m) as f64;
            pts.push(vec![rho * th.cos(), rho * th.sin()]);
        }
    }
    pts
}

fn grid_oscillation(obs: &dyn Observable, center: &[f64], grid: &[Vec<f64>], buf: &mut Vec<Complex64>) -> f64 {
    buf.clear();
    let mut p = vec![0.0; center.len()];
    for z in grid {
        for ((o, c), d) in p.iter_mut().zip(center).zip(z) {
            *o = c + d;
        }
        buf.push(obs.eval_x(&p));
    }
    if obs.is_real() {
        let (lo, hi) = buf
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.re), hi.max(v.re)));
        return hi - lo;
    }
    let mut best = 0.0f64;
    for i in 0..buf.len() {
        for j in i + 1..buf.len() {
            best = best.max((buf[i] - buf[j]).norm());
        }
    }
    best
}

fn seminorm_rows<F: Fn(&[f64]) -> f64 + Sync>(ps: &PointSet, osc: F) -> f64 {
    let dim = ps.dim();
    (0..ps.len())
        .into_par_iter()
        .map(|i| {
            let x = ps.point(i);
            let mut buf = vec![0.0; dim];
            let mut row = 0.0;
            for (j, y) in ps.points().enumerate() {
                if j != i {
                    diff(x, y, &mut buf);
                    row += osc(&buf);
                }
            }
            row
        })
        .reduce(|| 0.0, f64::max)
}

/// Seminorm `sup_x sum_{y != x} sup_{|z|,|z'| <= 2 delta} |alpha(x-y+z) - alpha(x-y+z')|`.
pub fn gamma_delta_seminorm(obs: &dyn Observable, ps: &PointSet, delta: f64) -> Result<NormValue> {
    gamma_delta_seminorm_with(obs, ps, delta, &SeminormOptions::default())
}

pub fn gamma_delta_seminorm_with(
    obs: &dyn Observable,
    ps: &PointSet,
    delta: f64,
    opts: &SeminormOptions,
) -> Result<NormValue> {
    check_dims(obs, ps)?;
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::invalid(format!("delta must be >= 0, got {delta}")));
    }
    if delta == 0.0 || ps.len() < 2 {
        return Ok(NormValue {
            value: 0.0,
            method: NormMethod::ExactSum,
            tolerance: 0.0,
        });
    }
    let rho = 2.0 * delta;
    let probe = vec![0.0; ps.dim()];
    if opts.method == SeminormMethod::Auto && obs.ball_oscillation(&probe, rho).is_some() {
        let value = seminorm_rows(ps, |c| obs.ball_oscillation(c, rho).expect("checked above"));
        return Ok(NormValue {
            value,
            method: NormMethod::ExactSum,
            tolerance: 0.0,
        });
    }
    let a = ps.min_dist();
    let per_axis = 2 * (8.0 * rho / rho.min(a)).ceil() as usize + 1;
    let run = |m: usize| {
        let grid = ball_grid(ps.dim(), rho, m);
        seminorm_rows(ps, |c| {
            let mut vals = Vec::with_capacity(grid.len());
            grid_oscillation(obs, c, &grid, &mut vals)
        })
    };
    let coarse = run(per_axis);
    let fine = run(2 * per_axis - 1);
    let change = (fine - coarse).abs();
    let tol = opts.rel_tol * fine.abs().max(f64::MIN_POSITIVE);
    if change > tol {
        return Err(Error::GridNonConvergence { change, tol });
    }
    Ok(NormValue {
        value: fine.max(coarse),
        method: NormMethod::GridSupremum,
        tolerance: change,
    })
}

/// `int ||d^order alpha(y)|| dy` over `R^nu` minus the ball `|y| < r_min`.
fn derivative_integral(obs: &dyn Observable, order: usize, r_min: f64, opts: &QuadOptions) -> Result<(f64, f64)> {
    let dim = obs.dim();
    let big_r = obs.tail_radius(1e-12);
    if big_r <= r_min {
        return Ok((0.0, 0.0));
    }
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let dn = |y: &[f64]| match derivative_norm(obs, y, order) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let result = if obs.is_radial() {
        // polar coordinates: |S^{nu-1}| = nu |B_1|
        let surface = dim as f64 * unit_ball_volume(dim);
        let mut e1 = vec![0.0; dim];
        let q = integrate(
            |r| {
                e1[0] = r;
                r.powi(dim as i32 - 1) * dn(&e1)
            },
            r_min,
            big_r,
            &obs.radial_breakpoints(order),
            opts,
        )?;
        (surface * q.value, surface * q.error)
    } else {
        match dim {
            1 => {
                let bps: Vec<f64> = obs.radial_breakpoints(order).iter().flat_map(|&b| [-b, b]).collect();
                let right = integrate(|y| dn(&[y]), r_min, big_r, &bps, opts)?;
                let left = integrate(|y| dn(&[y]), -big_r, -r_min, &bps, opts)?;
                (right.value + left.value, right.error + left.error)
            }
            2 => {
                let inner_opts = QuadOptions {
                    abs_tol: opts.abs_tol / (4.0 * big_r.max(1.0)),
                    ..*opts
                };
                let inner_err = RefCell::new(0.0f64);
                let outer = integrate(
                    |y0| {
                        let cut = if y0.abs() < r_min { (r_min * r_min - y0 * y0).sqrt() } else { 0.0 };
                        let f = |y1: f64| dn(&[y0, y1]);
                        let pieces = if cut > 0.0 {
                            vec![(-big_r, -cut), (cut, big_r)]
                        } else {
                            vec![(-big_r, big_r)]
                        };
                        let mut total = 0.0;
                        for (lo, hi) in pieces {
                            match integrate(f, lo, hi, &[], &inner_opts) {
                                Ok(q) => {
                                    total += q.value;
                                    let mut e = inner_err.borrow_mut();
                                    *e = e.max(q.error);
                                }
                                Err(err) => {
                                    failure.borrow_mut().get_or_insert(err);
                                }
                            }
                        }
                        total
                    },
                    -big_r,
                    big_r,
                    &[-r_min, r_min],
                    opts,
                )?;
                let err = outer.error + 2.0 * big_r * inner_err.into_inner();
                (outer.value, err)
            }
            _ => {
                return Err(Error::Unsupported(format!(
                    "quadrature norms of non-radial observables need dimension 1 or 2, got {dim}"
                )))
            }
        }
    };
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(result)
}

fn sobolev_sum(obs: &dyn Observable, a: f64, shift: usize, r_min: f64) -> Result<NormValue> {
    if !(a > 0.0) {
        return Err(Error::invalid(format!("a must be positive, got {a}")));
    }
    let dim = obs.dim();
    let opts = QuadOptions::default();
    let mut value = 0.0;
    let mut tol = 0.0;
    let mut fact = 1.0;
    for k in 0..=dim {
        if k > 0 {
            fact *= k as f64;
        }
        let weight = (2.0 / a).powi((dim - k) as i32) / fact;
        if weight == 0.0 {
            continue;
        }
        let (v, e) = derivative_integral(obs, k + shift, r_min, &opts)?;
        value += weight * v;
        tol += weight * (e + opts.abs_tol);
    }
    let vol = unit_ball_volume(dim);
    Ok(NormValue {
        value: value / vol,
        method: NormMethod::Quadrature,
        tolerance: tol / vol,
    })
}

/// `||alpha||_{nu,a}`.
pub fn sobolev_norm(obs: &dyn Observable, a: f64) -> Result<NormValue> {
    if obs.constant_offset() != Complex64::new(0.0, 0.0) {
        return Err(Error::Unsupported(
            "the Sobolev norm of an observable with a constant offset is infinite".into(),
        ));
    }
    sobolev_sum(obs, a, 0, 0.0)
}

/// `||d alpha||_{nu,a}`.
pub fn sobolev_d_norm(obs: &dyn Observable, a: f64) -> Result<NormValue> {
    sobolev_sum(obs, a, 1, 0.0)
}

/// `4 delta |B_1|^-1 sum_k (1/k!) (2/a~)^{nu-k} int_{|y| >= a/2} ||d^{k+1} alpha||`
/// with `a~ = a - 4 delta`; never larger than `4 delta ||d alpha||_{nu,a~}`.
pub fn seminorm_sharp_bound(obs: &dyn Observable, a: f64, delta: f64) -> Result<NormValue> {
    let a_tilde = a - 4.0 * delta;
    if !(a_tilde > 0.0) {
        return Err(Error::invalid(format!("need a - 4 delta > 0, got {a_tilde}")));
    }
    let r_min = if a.is_finite() { a / 2.0 } else { f64::INFINITY };
    let v = sobolev_sum(obs, a_tilde, 1, r_min)?;
    Ok(NormValue {
        value: 4.0 * delta * v.value,
        tolerance: 4.0 * delta * v.tolerance,
        ..v
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormCheckReport {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    pub method: String,
    pub tolerance: f64,
    /// The check was not applicable (single-point set).
    pub vacuous: bool,
    /// Sharper right-hand side from restricting the integral to `|y| >= a/2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub secondary_rhs: Option<f64>,
    pub a: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

fn vacuous(a: f64, delta: Option<f64>) -> NormCheckReport {
    NormCheckReport {
        lhs: 0.0,
        rhs: 0.0,
        pass: true,
        method: "vacuous".into(),
        tolerance: 0.0,
        vacuous: true,
        secondary_rhs: None,
        a,
        delta,
    }
}

fn method_name(m: NormMethod) -> &'static str {
    match m {
        NormMethod::ExactSum => "exact-sum",
        NormMethod::Quadrature => "quadrature",
        NormMethod::GridSupremum => "grid-supremum",
    }
}

/// `||alpha||_Gamma <= ||alpha||_{nu,a}` with `a` the certified minimal distance.
pub fn check_gamma_domination(obs: &dyn Observable, ps: &PointSet) -> Result<NormCheckReport> {
    check_dims(obs, ps)?;
    let md = verify_min_distance(ps);
    if md.is_single_point() {
        return Ok(vacuous(f64::INFINITY, None));
    }
    let a = md.value();
    let lhs = gamma_norm(obs, ps)?;
    let rhs = sobolev_norm(obs, a)?;
    let tolerance = lhs.tolerance + rhs.tolerance;
    Ok(NormCheckReport {
        lhs: lhs.value,
        rhs: rhs.value,
        pass: lhs.value <= rhs.value + tolerance,
        method: format!("{} vs {}", method_name(lhs.method), method_name(rhs.method)),
        tolerance,
        vacuous: false,
        secondary_rhs: None,
        a,
        delta: None,
    })
}

/// `||alpha||_{Gamma,delta} <= 4 delta ||d alpha||_{nu,a-4delta}`.
pub fn check_seminorm_domination(obs: &dyn Observable, ps: &PointSet, delta: f64) -> Result<NormCheckReport> {
    check_dims(obs, ps)?;
    let md = verify_min_distance(ps);
    let a = md.value();
    if !(a - 4.0 * delta > 0.0) {
        return Err(Error::invalid(format!(
            "need a - 4 delta > 0, got a = {a}, delta = {delta}"
        )));
    }
    if md.is_single_point() {
        return Ok(vacuous(a, Some(delta)));
    }
    let lhs = gamma_delta_seminorm(obs, ps, delta)?;
    if delta == 0.0 {
        return Ok(NormCheckReport {
            lhs: lhs.value,
            rhs: 0.0,
            pass: lhs.value <= 0.0,
            method: "exact-sum vs quadrature".into(),
            tolerance: 0.0,
            vacuous: false,
            secondary_rhs: Some(0.0),
            a,
            delta: Some(delta),
        });
    }
    let d = sobolev_d_norm(obs, a - 4.0 * delta)?;
    let rhs = 4.0 * delta * d.value;
    let sharp = seminorm_sharp_bound(obs, a, delta)?;
    let tolerance = lhs.tolerance + 4.0 * delta * d.tolerance;
    Ok(NormCheckReport {
        lhs: lhs.value,
        rhs,
        pass: lhs.value <= rhs + tolerance,
        method: format!("{} vs {}", method_name(lhs.method), method_name(d.method)),
        tolerance,
        vacuous: false,
        secondary_rhs: Some(sharp.value),
        a,
        delta: Some(delta),
    })
}
