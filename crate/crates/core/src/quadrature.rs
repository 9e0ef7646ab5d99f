//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals,
//! plus a nested tensor-product rule for two dimensions.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

// QUADPACK qk15 abscissae and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    /// Target absolute error of the whole integral.
    pub abs_tol: f64,
    /// Target relative error; the run stops when either target is met.
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-10,
            rel_tol: 1e-13,
            max_intervals: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kr = fc * WGK[7];
    let mut ga = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kr += WGK[j] * s;
        if j % 2 == 1 {
            ga += WG[j / 2] * s;
        }
    }
    (kr * h, ((kr - ga) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates `f` over `[a, b]`, starting from the pieces cut at
/// `breakpoints` (points outside the interval are ignored).
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: &QuadOptions,
) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts: Vec<f64> = std::iter::once(lo)
        .chain(breakpoints.iter().copied().filter(|&x| x > lo && x < hi))
        .chain(std::iter::once(hi))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut heap = BinaryHeap::new();
    let (mut total, mut err) = (0.0, 0.0);
    for w in cuts.windows(2) {
        let (value, error) = kronrod(&mut f, w[0], w[1]);
        total += value;
        err += error;
        heap.push(Piece {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }
    while err > opts.abs_tol.max(opts.rel_tol * total.abs()) {
        if heap.len() >= opts.max_intervals {
            return Err(Error::QuadratureNonConvergence {
                estimate: err,
                target: opts.abs_tol,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval cannot be split further in floating point
            return Err(Error::QuadratureNonConvergence {
                estimate: err,
                target: opts.abs_tol,
            });
        }
        let (v1, e1) = kronrod(&mut f, worst.a, mid);
        let (v2, e2) = kronrod(&mut f, mid, worst.b);
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.error;
        heap.push(Piece { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, error: e2 });
    }
    // recompute from the pieces to shed accumulated rounding
    let pieces = heap.into_vec();
    let value: f64 = pieces.iter().map(|p| p.value).sum();
    let error: f64 = pieces.iter().map(|p| p.error).sum();
    Ok(QuadResult {
        value: sign * value,
        error,
        intervals: pieces.len(),
    })
}

/// Tensor-product integral over the square `[-r, r]^2`: an adaptive outer
/// rule over `y0` whose integrand is an adaptive inner rule over `y1`.
pub fn integrate_square<F: Fn(f64, f64) -> f64>(
    f: F,
    r: f64,
    breakpoints: &[f64],
    opts: &QuadOptions,
) -> Result<QuadResult> {
    let inner_opts = QuadOptions {
        abs_tol: opts.abs_tol / (4.0 * r.max(1.0)),
        ..*opts
    };
    let mut failure = None;
    let mut inner_err = 0.0f64;
    let outer = integrate(
        |y0| match integrate(|y1| f(y0, y1), -r, r, breakpoints, &inner_opts) {
            Ok(q) => {
                inner_err = inner_err.max(q.error);
                q.value
            }
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        -r,
        r,
        breakpoints,
        opts,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let outer = outer?;
    Ok(QuadResult {
        value: outer.value,
        error: outer.error + 2.0 * r * inner_err,
        intervals: outer.intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate(|x| 7.0 * x.powi(4) - 11.0 * x * x + 1.0, -3.0, 10.0, &[], &QuadOptions::default()).unwrap();
        let anti = |x: f64| 7.0 / 5.0 * x.powi(5) - 11.0 / 3.0 * x.powi(3) + x;
        assert_abs_diff_eq!(q.value, anti(10.0) - anti(-3.0), epsilon = 1e-7);
        assert_eq!(q.intervals, 1);
    }

    #[test]
    fn gaussian_and_kink() {
        let q = integrate(|x: f64| (-x * x / 2.0).exp(), -12.0, 12.0, &[], &QuadOptions::default()).unwrap();
        assert_abs_diff_eq!(q.value, (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-12);
        let k = integrate(|x: f64| (x - 0.3).abs(), -1.0, 1.0, &[], &QuadOptions::default()).unwrap();
        assert_abs_diff_eq!(k.value, 0.5 * 1.3 * 1.3 + 0.5 * 0.7 * 0.7, epsilon = 1e-10);
        let kb = integrate(|x: f64| (x - 0.3).abs(), -1.0, 1.0, &[0.3], &QuadOptions::default()).unwrap();
        assert_eq!(kb.intervals, 2);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let q = integrate(|x| x, 1.0, 0.0, &[], &QuadOptions::default()).unwrap();
        assert_abs_diff_eq!(q.value, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn square_gaussian() {
        let q = integrate_square(|a, b| (-(a * a + b * b) / 2.0).exp(), 10.0, &[], &QuadOptions::default()).unwrap();
        assert_abs_diff_eq!(q.value, 2.0 * std::f64::consts::PI, epsilon = 1e-9);
    }

    #[test]
    fn non_convergence_reported() {
        let opts = QuadOptions {
            abs_tol: 1e-14,
            rel_tol: 0.0,
            max_intervals: 3,
        };
        assert!(integrate(|x: f64| (50.0 * x).sin().abs(), 0.0, 10.0, &[], &opts).is_err());
    }
}
