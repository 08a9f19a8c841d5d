mod common;

use common::{random_real, rel_diff};
use pmhd::besov::LpContext;
use pmhd::operators::{derivative, heat, laplacian, leray, para_gt, para_lt, para_res};
use pmhd::spectral::{pointwise_product, SpectralField, TorusGrid};
use proptest::prelude::*;

#[test]
fn bony_pieces_sum_to_product() {
    for n in [8, 16] {
        let grid = TorusGrid::new(n).unwrap();
        let ctx = LpContext::new(&grid);
        for seed in 0..4 {
            let f = random_real(&grid, 1, seed);
            let g = random_real(&grid, 1, seed + 100);
            let sum = para_lt(&ctx, &f, &g).unwrap().add(&para_gt(&ctx, &f, &g).unwrap()).unwrap();
            let sum = sum.add(&para_res(&ctx, &f, &g).unwrap()).unwrap();
            let prod = pointwise_product(&f, &g).unwrap();
            assert!(rel_diff(&sum, &prod) < 1e-12, "n = {n}");
        }
    }
}

#[test]
fn para_high_is_swapped_low() {
    let grid = TorusGrid::new(16).unwrap();
    let ctx = LpContext::new(&grid);
    let f = random_real(&grid, 1, 1);
    let g = random_real(&grid, 1, 2);
    let a = para_gt(&ctx, &f, &g).unwrap();
    let b = para_lt(&ctx, &g, &f).unwrap();
    assert!(rel_diff(&a, &b) < 1e-14);
}

#[test]
fn leray_idempotent_and_kills_gradients() {
    for n in [8, 16] {
        let grid = TorusGrid::new(n).unwrap();
        let f = random_real(&grid, 3, 5);
        let p = leray(&f).unwrap();
        assert!(rel_diff(&leray(&p).unwrap(), &p) < 1e-12);
        assert!(p.divergence_residual() < 1e-12 * f.max_abs() * n as f64);
        let phi = random_real(&grid, 1, 6);
        let grad = SpectralField::from_components(
            &grid,
            (0..3).map(|a| derivative(&phi, a).comp(0).to_vec()).collect(),
        );
        assert!(leray(&grad).unwrap().l2_norm() <= 1e-12 * grad.l2_norm());
    }
}

#[test]
fn heat_semigroup_law() {
    for n in [8, 16] {
        let grid = TorusGrid::new(n).unwrap();
        let f = random_real(&grid, 3, 9);
        for (s, t) in [(0.01, 0.02), (0.1, 0.3), (0.0, 0.5)] {
            let two = heat(&heat(&f, s).unwrap(), t).unwrap();
            let one = heat(&f, s + t).unwrap();
            assert!(rel_diff(&two, &one) < 1e-12);
        }
        assert_eq!(heat(&f, 0.0).unwrap().data(), f.data());
    }
}

#[test]
fn heat_solves_heat_equation_on_eigenmode() {
    // d/dt P_t f = Lap P_t f, checked by a centred difference
    let grid = TorusGrid::new(8).unwrap();
    let f = random_real(&grid, 1, 3);
    let (t, h) = (0.05, 1e-5);
    let fd = heat(&f, t + h).unwrap().sub(&heat(&f, t - h).unwrap()).unwrap().scaled(0.5 / h);
    let lap = laplacian(&heat(&f, t).unwrap());
    assert!(rel_diff(&fd, &lap) < 1e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reconstruction_holds_for_any_seed(seed in 0u64..1_000_000) {
        let grid = TorusGrid::new(8).unwrap();
        let ctx = LpContext::new(&grid);
        let f = random_real(&grid, 1, seed);
        let g = random_real(&grid, 1, seed ^ 0xabcdef);
        let sum = para_lt(&ctx, &f, &g).unwrap()
            .add(&para_gt(&ctx, &f, &g).unwrap()).unwrap()
            .add(&para_res(&ctx, &f, &g).unwrap()).unwrap();
        prop_assert!(rel_diff(&sum, &pointwise_product(&f, &g).unwrap()) < 1e-12);
    }

    #[test]
    fn leray_output_divergence_free(seed in 0u64..1_000_000) {
        let grid = TorusGrid::new(8).unwrap();
        let p = leray(&random_real(&grid, 3, seed)).unwrap();
        prop_assert!(p.divergence_residual() < 1e-12);
        prop_assert!(p.reality_defect() < 1e-15);
    }

    #[test]
    fn heat_contracts(seed in 0u64..1_000_000, t in 0.0f64..2.0) {
        let grid = TorusGrid::new(8).unwrap();
        let f = random_real(&grid, 1, seed);
        prop_assert!(heat(&f, t).unwrap().l2_norm() <= f.l2_norm() * (1.0 + 1e-15));
    }

    #[test]
    fn product_is_symmetric(seed in 0u64..1_000_000) {
        let grid = TorusGrid::new(8).unwrap();
        let f = random_real(&grid, 1, seed);
        let g = random_real(&grid, 1, seed + 1);
        let a = pointwise_product(&f, &g).unwrap();
        let b = pointwise_product(&g, &f).unwrap();
        prop_assert!(rel_diff(&a, &b) < 1e-14);
    }
}
