use mvsde_core::analysis::{bihari_bound, fit_rate, RhoEta};
use mvsde_core::kernels::{mean_field_drift, KernelPair};
use mvsde_core::measure::{wasserstein_1d, wasserstein_assignment, wasserstein_brute_force, EmpiricalMeasure};
use mvsde_core::paths::{BrownianBundle, TimeGrid};
use proptest::prelude::*;

const ETA: f64 = 0.1353352832366127;

fn scalars(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 1..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn rho_is_strictly_increasing(a in 0.0f64..3.0, b in 0.0f64..3.0, eta in 1e-3f64..0.36) {
        prop_assume!(a != b);
        let r = RhoEta::new(eta).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(r.value(lo) < r.value(hi));
    }

    #[test]
    fn rho_is_midpoint_concave(a in 0.0f64..3.0, b in 0.0f64..3.0, eta in 1e-3f64..0.36) {
        let r = RhoEta::new(eta).unwrap();
        let mid = r.value(0.5 * (a + b));
        prop_assert!(mid >= 0.5 * (r.value(a) + r.value(b)) - 1e-15);
    }

    #[test]
    fn bihari_grows_with_both_arguments(g in 1e-8f64..0.13, dg in 0.0f64..0.005, q in 0.0f64..3.0, dq in 0.0f64..1.0) {
        let base = bihari_bound(g, q, ETA).unwrap();
        prop_assert!(bihari_bound(g, q + dq, ETA).unwrap() >= base);
        if g + dg < ETA {
            prop_assert!(bihari_bound(g + dg, q, ETA).unwrap() >= base);
        }
        prop_assert!(base >= g);
    }

    #[test]
    fn fit_rate_ignores_the_constant(
        errs in prop::collection::vec(1e-6f64..1.0, 3..8),
        scale in 1e-3f64..1e3,
    ) {
        let xs: Vec<f64> = (0..errs.len()).map(|i| 2f64.powi(i as i32 + 3)).collect();
        let scaled: Vec<f64> = errs.iter().map(|e| e * scale).collect();
        let a = fit_rate(&xs, &errs).unwrap();
        let b = fit_rate(&xs, &scaled).unwrap();
        prop_assert!((a.slope - b.slope).abs() < 1e-12);
        for ((x, e), r) in xs.iter().zip(&errs).zip(&a.residuals) {
            prop_assert!((e.ln() - a.predict_log(*x) - r).abs() < 1e-12);
        }
        prop_assert!((0.0..=1.0).contains(&a.r_squared));
    }

    #[test]
    fn averaging_is_linear_under_concatenation(ys in scalars(30), zs_seed in 0u64..1000, x in -3.0f64..3.0) {
        let n = ys.len();
        let zs: Vec<f64> = (0..n).map(|i| ((zs_seed + i as u64 * 7919) % 1000) as f64 / 100.0 - 5.0).collect();
        let (a, b) = (EmpiricalMeasure::from_scalars(&ys).unwrap(), EmpiricalMeasure::from_scalars(&zs).unwrap());
        let ab = a.concat(&b).unwrap();
        for k in [
            KernelPair::linear(-1.0, 0.5, 0.2, 1),
            KernelPair::kuramoto(1.0, 0.5, 1),
            KernelPair::loglip(1.0, ETA, 0.5).unwrap(),
            KernelPair::loglip_diffusion(1.0, ETA, 0.5, 0.5).unwrap(),
        ] {
            let whole = mean_field_drift(&k, &[x], &ab).unwrap()[0];
            let parts = 0.5 * (mean_field_drift(&k, &[x], &a).unwrap()[0] + mean_field_drift(&k, &[x], &b).unwrap()[0]);
            prop_assert!((whole - parts).abs() < 1e-12, "{}: {whole} vs {parts}", k.name());
        }
    }

    #[test]
    fn linear_average_sees_only_the_mean(ys in scalars(20), shift in -1.0f64..1.0, x in -3.0f64..3.0) {
        let k = KernelPair::linear(-1.0, 0.5, 0.2, 1);
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        // a different cloud with the same mean
        let mut other: Vec<f64> = ys.iter().map(|y| m + (y - m) * (1.0 + shift.abs())).collect();
        other.reverse();
        let a = mean_field_drift(&k, &[x], &EmpiricalMeasure::from_scalars(&ys).unwrap()).unwrap()[0];
        let b = mean_field_drift(&k, &[x], &EmpiricalMeasure::from_scalars(&other).unwrap()).unwrap()[0];
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_wasserstein_matches_the_oracles(pair in (1usize..=6).prop_flat_map(|n| (prop::collection::vec(-3.0f64..3.0, n), prop::collection::vec(-3.0f64..3.0, n))), p in 1.0f64..3.0) {
        let (a, b) = (EmpiricalMeasure::from_scalars(&pair.0).unwrap(), EmpiricalMeasure::from_scalars(&pair.1).unwrap());
        let w = wasserstein_1d(&a, &b, p).unwrap();
        prop_assert!((w - wasserstein_brute_force(&a, &b, p).unwrap()).abs() < 1e-12);
        prop_assert!((w - wasserstein_assignment(&a, &b, p).unwrap().cost).abs() < 1e-12);
    }

    #[test]
    fn restriction_is_associative(seed in 0u64..10_000) {
        let fine = TimeGrid::new(1.0, 32).unwrap();
        let mid = TimeGrid::new(1.0, 8).unwrap();
        let coarse = TimeGrid::new(1.0, 2).unwrap();
        let b = BrownianBundle::generate(seed, 3, 2, fine, 1 << 16).unwrap();
        let two_step = b.restrict(&mid).unwrap().restrict(&coarse).unwrap();
        let direct = b.restrict(&coarse).unwrap();
        for i in 0..3 {
            for k in 0..2 {
                prop_assert_eq!(two_step.increment(i, k), direct.increment(i, k));
            }
        }
    }
}
