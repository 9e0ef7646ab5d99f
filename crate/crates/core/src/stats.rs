//! Small statistics helpers for the Monte Carlo experiments.

use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Compensated (Kahan–Babuska) summation.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Two-sided Clopper–Pearson interval for `k` successes in `n` trials at
/// confidence `level` (e.g. 0.99).
pub fn clopper_pearson(k: u64, n: u64, level: f64) -> Result<Interval> {
    if n == 0 || k > n {
        return Err(Error::invalid(format!("need 0 <= k <= n, n > 0; got k = {k}, n = {n}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("confidence level must lie in (0, 1)"));
    }
    let alpha = 1.0 - level;
    let (kf, nf) = (k as f64, n as f64);
    let beta = |a: f64, b: f64| Beta::new(a, b).map_err(|e| Error::invalid(e.to_string()));
    let lo = if k == 0 {
        0.0
    } else {
        beta(kf, nf - kf + 1.0)?.inverse_cdf(alpha / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        beta(kf + 1.0, nf - kf)?.inverse_cdf(1.0 - alpha / 2.0)
    };
    Ok(Interval { lo, hi })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// Plain (not excess) kurtosis; 3 for a normal law.
    pub kurtosis: f64,
}

/// Sample moments with the `1/n` normalization.
pub fn moments(xs: &[f64]) -> Result<Moments> {
    if xs.len() < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let n = xs.len() as f64;
    let mean = kahan_sum(xs.iter().copied()) / n;
    let m2 = kahan_sum(xs.iter().map(|x| (x - mean).powi(2))) / n;
    let m3 = kahan_sum(xs.iter().map(|x| (x - mean).powi(3))) / n;
    let m4 = kahan_sum(xs.iter().map(|x| (x - mean).powi(4))) / n;
    if m2 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(Moments {
        mean,
        variance: m2,
        skewness: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2),
    })
}

/// Kolmogorov–Smirnov distance between the empirical law of `xs` and
/// `N(mean, sd^2)`.
pub fn ks_distance_normal(xs: &[f64], mean: f64, sd: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let normal = Normal::new(mean, sd).map_err(|e| Error::invalid(e.to_string()))?;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut dist = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = normal.cdf(x);
        dist = dist.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(dist)
}
