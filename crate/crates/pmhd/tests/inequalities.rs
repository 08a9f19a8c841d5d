use pmhd::besov::LpContext;
use pmhd::exponents::{validate_exponents, ExponentRecord};
use pmhd::inequalities::{embed, fitted_constant, sample_ratio, stability_sweep, Inequality, ALL_INEQUALITIES};
use pmhd::noise::replica_rng;
use pmhd::spectral::TorusGrid;
use proptest::prelude::*;

#[test]
fn admissible_exponents() {
    assert!(validate_exponents(&ExponentRecord { delta0: 0.25, z: 0.6, delta: 0.05, beta: 0.10 }).is_empty());
    let equal = validate_exponents(&ExponentRecord { delta0: 0.25, z: 0.6, delta: 0.25, beta: 0.2 });
    assert!(equal.iter().any(|c| c == "delta < (1 - z)/4"));
    let flat = validate_exponents(&ExponentRecord { beta: 0.0, ..ExponentRecord::default() });
    assert_eq!(flat, vec!["delta/2 < beta".to_string()]);
}

#[test]
fn gaussian_power_is_exact() {
    let ctx = LpContext::new(&TorusGrid::new(8).unwrap());
    let c = fitted_constant(Inequality::GaussianPower, &ctx, &ctx, 20, 1).unwrap();
    assert!((c - 1.0).abs() < 1e-3, "{c}");
}

#[test]
fn constants_are_stable_under_refinement() {
    let rows = stability_sweep(&ALL_INEQUALITIES, 16, 32, 40, 1).unwrap();
    assert_eq!(rows.len(), ALL_INEQUALITIES.len());
    for r in &rows {
        assert!(r.stable(0.3), "{}", r.csv_row());
    }
}

#[test]
fn embedding_keeps_coefficients() {
    let small = LpContext::new(&TorusGrid::new(8).unwrap());
    let large = TorusGrid::new(16).unwrap();
    let mut rng = replica_rng(4, 0);
    let f = pmhd::inequalities::random_field(&small, -0.3, &mut rng);
    let g = embed(&f, &large);
    assert!((g.l2_norm() - f.l2_norm()).abs() <= 1e-14 * f.l2_norm());
    let back = embed(&g, &small.grid);
    assert_eq!(back.data(), f.data());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ratios_are_finite_and_nonnegative(seed in 0u64..10_000, which in 0usize..13) {
        let ctx = LpContext::new(&TorusGrid::new(8).unwrap());
        let mut rng = replica_rng(seed, 0);
        let r = sample_ratio(ALL_INEQUALITIES[which], &ctx, &ctx, &mut rng).unwrap();
        prop_assert!(r.is_finite() && r >= 0.0);
    }
}
