use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;
use selfavg_core::correlation::{autocorr, autocorr_a, centered_value, intensity_integral, PairFunctional};
use selfavg_core::experiments::{enumerate_exact, mc_tail};
use selfavg_core::norms::{gamma_delta_seminorm, gamma_norm, sobolev_norm};
use selfavg_core::observables::{gaussian, GaussianObservable, Observable, Scaled, SharedObservable, Shifted};
use selfavg_core::pointset::{hardcore_random, lattice, verify_min_distance, PointSet};
use selfavg_core::rates::{h, rate_big_j, rate_j, RateParams};
use selfavg_core::scatterers::{
    bounds_of, sample, AmplitudeSpec, Discrete, DislocationSpec, SampleValues, ScattererSpec,
};

fn line(xs: &[f64]) -> PointSet {
    let v: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    PointSet::from_points(&v, "line").unwrap()
}

/// Sorted, pairwise separated by at least 1.
fn separated_line(gaps: &[f64]) -> PointSet {
    let mut x = 0.0;
    let mut pts = vec![0.0];
    for g in gaps {
        x += 1.0 + g;
        pts.push(x);
    }
    line(&pts)
}

fn lattice_count(dim: usize, spacing: f64, radius: f64) -> usize {
    let m = (radius / spacing).floor() as i64;
    let r2 = radius * radius;
    let mut count = 0;
    let mut idx = vec![-m; dim];
    loop {
        let d2: f64 = idx.iter().map(|&i| (i as f64 * spacing).powi(2)).sum();
        if d2 <= r2 {
            count += 1;
        }
        let mut k = 0;
        loop {
            if k == dim {
                return count;
            }
            idx[k] += 1;
            if idx[k] <= m {
                break;
            }
            idx[k] = -m;
            k += 1;
        }
    }
}

fn amp_law() -> impl Strategy<Value = Discrete<Complex64>> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64, 0.05..1.0f64), 1..5).prop_map(|v| {
        let total: f64 = v.iter().map(|t| t.2).sum();
        Discrete::new(
            v.iter().map(|t| Complex64::new(t.0, t.1)).collect(),
            v.iter().map(|t| t.2 / total).collect(),
        )
        .unwrap()
    })
}

fn disl_law(delta: f64) -> impl Strategy<Value = Discrete<Vec<f64>>> {
    prop::collection::vec((-1.0..1.0f64, 0.05..1.0f64), 1..4).prop_map(move |v| {
        let total: f64 = v.iter().map(|t| t.1).sum();
        Discrete::new(v.iter().map(|t| vec![t.0 * delta]).collect(), v.iter().map(|t| t.1 / total).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lattice_count_and_separation(dim in 1usize..4, spacing in 0.3..2.0f64, radius in 0.5..4.0f64) {
        let ps = lattice(dim, spacing, radius).unwrap();
        prop_assert_eq!(ps.len(), lattice_count(dim, spacing, radius));
        if ps.len() > 1 {
            prop_assert!(verify_min_distance(&ps).value() >= ps.min_dist());
        }
    }

    #[test]
    fn hardcore_is_reproducible_and_separated(dim in 1usize..3, min_dist in 0.5..1.5f64, radius in 1.0..5.0f64, seed in any::<u64>()) {
        let a = hardcore_random(dim, min_dist, radius, seed).unwrap();
        let b = hardcore_random(dim, min_dist, radius, seed).unwrap();
        prop_assert_eq!(a.to_csv(), b.to_csv());
        if a.len() > 1 {
            prop_assert!(verify_min_distance(&a).value() >= a.min_dist());
            prop_assert!(a.min_dist() >= min_dist);
        }
    }

    #[test]
    fn amplitude_samples_respect_bounds(law in amp_law(), other in amp_law(), seed in any::<u64>()) {
        let spec = AmplitudeSpec::iid(law.clone()).with_override(2, other);
        let bounds = bounds_of(&spec);
        let ps = lattice(1, 1.0, 6.0).unwrap();
        let s = sample(&ScattererSpec::Amplitudes(spec.clone()), &ps, seed).unwrap();
        let SampleValues::Amplitudes(vals) = &s.values else { panic!("model A") };
        for (i, v) in vals.iter().enumerate() {
            let mean = spec.site(i).unwrap().mean();
            prop_assert!((v - mean).norm() <= bounds.b * (1.0 + 1e-12));
            prop_assert!(mean.norm() <= bounds.m * (1.0 + 1e-12));
        }
        // permuting support entries leaves the bounds unchanged
        let rev = Discrete::new(
            law.support().iter().rev().copied().collect(),
            law.probs().iter().rev().copied().collect(),
        ).unwrap();
        let b2 = bounds_of(&AmplitudeSpec::iid(rev).with_override(2, spec.site(2).unwrap().clone()));
        prop_assert!((b2.b - bounds.b).abs() <= 1e-12 * bounds.b.max(1.0));
        prop_assert!((b2.k - bounds.k).abs() <= 1e-12 * bounds.k.max(1.0));
    }

    #[test]
    fn dislocation_samples_respect_delta(law in disl_law(0.2), seed in any::<u64>()) {
        let spec = DislocationSpec::new(1, Some(law), BTreeMap::new(), Some(0.2)).unwrap();
        let ps = lattice(1, 1.0, 10.0).unwrap();
        let s = sample(&ScattererSpec::Dislocations(spec), &ps, seed).unwrap();
        let SampleValues::Dislocations { flat: w, .. } = &s.values else { panic!("model B") };
        prop_assert!(w.iter().all(|v| v.abs() <= 0.2));
    }

    #[test]
    fn gaussian_scale_covariance(sigma in 0.1..5.0f64, x in -4.0..4.0f64, y in -4.0..4.0f64) {
        for dim in [1usize, 2] {
            let g = GaussianObservable::new(dim, sigma).unwrap();
            let g1 = GaussianObservable::new(dim, 1.0).unwrap();
            let p: Vec<f64> = [x, y][..dim].to_vec();
            let q: Vec<f64> = p.iter().map(|v| sigma * v).collect();
            prop_assert_eq!(g.eval_x(&p), g1.eval_x(&q));
        }
    }

    #[test]
    fn gamma_norm_is_homogeneous(gaps in prop::collection::vec(0.0..2.0f64, 1..10), sigma in 0.3..3.0f64, c in 0.0..5.0f64) {
        let ps = separated_line(&gaps);
        let g = gaussian(1, sigma).unwrap();
        let scaled: SharedObservable = Arc::new(Scaled::new(g.clone(), c));
        let base = gamma_norm(&*g, &ps).unwrap().value;
        let got = gamma_norm(&*scaled, &ps).unwrap().value;
        prop_assert!((got - c * base).abs() <= 1e-12 * (c * base).max(1e-300));
    }

    #[test]
    fn seminorm_ignores_constants(gaps in prop::collection::vec(0.0..2.0f64, 1..8), sigma in 0.3..3.0f64, re in -3.0..3.0f64, im in -3.0..3.0f64, frac in 0.0..0.24f64) {
        let ps = separated_line(&gaps);
        let g = gaussian(1, sigma).unwrap();
        let shifted: SharedObservable = Arc::new(Shifted::new(g.clone(), Complex64::new(re, im)));
        let a = gamma_delta_seminorm(&*g, &ps, frac).unwrap().value;
        let b = gamma_delta_seminorm(&*shifted, &ps, frac).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
    }

    #[test]
    fn autocorr_is_permutation_invariant(gaps in prop::collection::vec(0.0..2.0f64, 2..9), seed in any::<u64>(), rot in 0usize..8) {
        let ps = separated_line(&gaps);
        let n = ps.len();
        let g = gaussian(1, 1.0).unwrap();
        let spec = ScattererSpec::Amplitudes(AmplitudeSpec::iid(
            Discrete::uniform(vec![Complex64::new(1.0, 0.5), Complex64::new(-0.3, 0.0), Complex64::new(0.0, 2.0)]).unwrap(),
        ));
        let s = sample(&spec, &ps, seed).unwrap();
        let SampleValues::Amplitudes(a) = &s.values else { panic!() };
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).rev().collect();
        let ps2 = ps.permuted(&perm).unwrap();
        let a2: Vec<Complex64> = perm.iter().map(|&i| a[i]).collect();
        let v1 = autocorr_a(&ps, a, &*g).unwrap().value;
        let v2 = autocorr_a(&ps2, &a2, &*g).unwrap().value;
        prop_assert!((v1 - v2).norm() <= 1e-12 * v1.norm().max(1.0));
    }

    #[test]
    fn model_b_centering_cancels_constants(gaps in prop::collection::vec(0.0..2.0f64, 1..8), seed in any::<u64>(), c in -4.0..4.0f64) {
        let ps = separated_line(&gaps);
        let g = gaussian(1, 1.0).unwrap();
        let shifted: SharedObservable = Arc::new(Shifted::new(g.clone(), Complex64::new(c, 0.0)));
        let spec = ScattererSpec::Dislocations(DislocationSpec::two_point(1, 0.2).unwrap());
        let s = sample(&spec, &ps, seed).unwrap();
        let y1 = centered_value(&ps, &spec, &s, &*g).unwrap();
        let y2 = centered_value(&ps, &spec, &s, &*shifted).unwrap();
        prop_assert!((y1 - y2).norm() <= 1e-10 * (1.0 + c.abs() * ps.len() as f64));
    }

    #[test]
    fn pair_functional_agrees_with_direct_sum(gaps in prop::collection::vec(0.0..2.0f64, 1..8), seed in any::<u64>()) {
        let ps = separated_line(&gaps);
        let g = gaussian(1, 0.8).unwrap();
        for spec in [
            ScattererSpec::Amplitudes(AmplitudeSpec::bernoulli_pm1()),
            ScattererSpec::Dislocations(DislocationSpec::two_point(1, 0.15).unwrap()),
        ] {
            let f = PairFunctional::new(&ps, &spec, &*g).unwrap();
            let idx = selfavg_core::scatterers::draw_indices(&spec, ps.len(), seed, 0).unwrap();
            let s = selfavg_core::scatterers::sample_from_indices(&spec, &idx, seed, 0).unwrap();
            let direct = autocorr(&ps, &s, &*g).unwrap().value * ps.len() as f64;
            let via = f.total(&idx).unwrap();
            prop_assert!((direct - via).norm() <= 1e-11 * direct.norm().max(1.0));
        }
    }

    #[test]
    fn rate_j_scaling_identity(eps in 0.0..2.0f64, s in 0.0..6.0f64, lam in prop::sample::select(vec![0.5, 2.0, 10.0])) {
        let p = RateParams::rounded();
        let a = rate_j(lam * eps, lam * lam * s, p.d / lam, lam.powi(3) * p.big_d);
        let b = rate_j(eps, s, p.d, p.big_d);
        prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-300));
    }

    #[test]
    fn rate_j_monotone(eps in 0.0..1.0f64, de in 1e-4..0.1f64, s in 0.0..5.0f64, ds in 1e-3..1.0f64) {
        let p = RateParams::rounded();
        let j = |e: f64, s: f64| rate_j(e, s, p.d, p.big_d);
        prop_assert!(j(eps, s) >= 0.0);
        prop_assert!(j(eps + de, s) > j(eps, s));
        prop_assert!(j(eps, s + ds) <= j(eps, s));
        prop_assert!(rate_j(eps, s, p.d, 2.0 * p.big_d) <= j(eps, s));
        prop_assert!(rate_j(eps, s, 1.5 * p.d, p.big_d) >= j(eps, s));
        // midpoint convexity
        let e2 = eps + 2.0 * de;
        prop_assert!(j(eps + de, s) <= 0.5 * (j(eps, s) + j(e2, s)) + 1e-15 * j(e2, s));
        let bj = rate_big_j(eps, p.d, p.big_d);
        let j4 = j(eps, 4.0);
        prop_assert!((bj - j4).abs() <= 1e-12 * j4.max(1e-300));
    }

    #[test]
    fn h_is_monotone(u in 0.0..0.105f64, v in 0.0..0.0525f64, du in 0.0..0.01f64, dv in 0.0..0.01f64) {
        let p = RateParams::rounded();
        let u2 = (u + du).min(2.0 * p.d);
        let v2 = (v + dv).min(p.d);
        let base = h(u, v, &p).unwrap();
        prop_assert!(base >= 0.0);
        prop_assert!(h(u2, v, &p).unwrap() >= base);
        prop_assert!(h(u, v2, &p).unwrap() >= base);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sobolev_is_homogeneous(sigma in 0.5..2.0f64, c in 0.1..4.0f64, a in 0.5..2.0f64) {
        let g = gaussian(1, sigma).unwrap();
        let scaled: SharedObservable = Arc::new(Scaled::new(g.clone(), c));
        let base = sobolev_norm(&*g, a).unwrap();
        let got = sobolev_norm(&*scaled, a).unwrap();
        prop_assert!((got.value - c * base.value).abs() <= 1e-8 * c * base.value);
    }

    #[test]
    fn two_route_autocorrelation(gaps in prop::collection::vec(0.0..1.5f64, 1..16), seed in any::<u64>()) {
        let ps = separated_line(&gaps);
        let g = gaussian(1, 1.0).unwrap();
        let spec = ScattererSpec::Amplitudes(AmplitudeSpec::iid(
            Discrete::uniform(vec![Complex64::new(1.0, 0.0), Complex64::new(-0.5, 0.5), Complex64::new(0.2, -1.0)]).unwrap(),
        ));
        let s = sample(&spec, &ps, seed).unwrap();
        let SampleValues::Amplitudes(a) = &s.values else { panic!() };
        let pair = autocorr_a(&ps, a, &*g).unwrap().value;
        let k = intensity_integral(&ps, a, &*g).unwrap();
        prop_assert!(pair.im.abs() <= 1e-12);
        prop_assert!((pair.re - k).abs() <= 1e-6 * pair.re.abs().max(1.0));
    }
}

/// Monte Carlo frequencies sit in the exact tail's 99% band. Fixed seeds keep
/// the 1% miss rate from turning into a flaky test.
#[test]
fn mc_tail_inside_exact_band() {
    let g = gaussian(1, 1.0).unwrap();
    let spec = ScattererSpec::Amplitudes(AmplitudeSpec::bernoulli_pm1());
    for (k, gaps) in [vec![0.0, 0.0, 0.0], vec![0.3, 0.0, 0.9, 0.1], vec![0.5, 0.2, 0.0, 0.7, 0.05]].iter().enumerate() {
        let ps = separated_line(gaps);
        let exact = enumerate_exact(&ps, &spec, &*g).unwrap();
        let jumps = exact.jump_points();
        let n = ps.len() as f64;
        let mut probes = vec![jumps[0] / 2.0];
        probes.extend(jumps.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        for v in probes {
            let t = mc_tail(&ps, &spec, &*g, v / n, 4000, 100 + k as u64).unwrap();
            let p = exact.tail(v);
            assert!(t.ci.lo <= p && p <= t.ci.hi, "eps {}: p {p} outside {:?}", v / n, t.ci);
        }
    }
}
