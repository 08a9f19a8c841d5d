use pmhd::besov::LpContext;
use pmhd::exponents::ExponentRecord;
use pmhd::noise::{geometric_time_grid, sample_driver_path, uniform_time_grid, CorrelationMode, MollifierCutoff};
use pmhd::spectral::{SpectralField, TorusGrid};
use pmhd::tree::{assemble_bundles, build_k, build_level2, build_level3, build_tree, BundleCorrection, TreeConstants};

fn every(path: &[SpectralField], stride: usize) -> Vec<SpectralField> {
    path.iter().step_by(stride).cloned().collect()
}

#[test]
fn zero_drivers_give_zero_tree() {
    let grid = TorusGrid::new(8).unwrap();
    let cutoff = MollifierCutoff::new(0.25).unwrap();
    let times = uniform_time_grid(0.1, 5);
    let path = sample_driver_path(&grid, cutoff, &times, 3, 0, CorrelationMode::Independent).unwrap();
    let zero = path.zeros_like();
    let tree = build_tree(&zero, &TreeConstants::zero(0.25)).unwrap();
    for f in tree.u2.iter().chain(&tree.b2).chain(&tree.u3).chain(&tree.b3).chain(&tree.k_u).chain(&tree.k_b) {
        assert_eq!(f.max_abs(), 0.0);
    }
}

#[test]
fn level3_vanishes_without_level2() {
    let grid = TorusGrid::new(8).unwrap();
    let cutoff = MollifierCutoff::new(0.25).unwrap();
    let times = uniform_time_grid(0.1, 4);
    let path = sample_driver_path(&grid, cutoff, &times, 4, 0, CorrelationMode::Identical).unwrap();
    let zero = vec![SpectralField::zeros(&grid, 3); times.len()];
    let l3 = build_level3(&path, &zero, &zero).unwrap();
    assert!(l3.u.iter().chain(&l3.b).all(|f| f.max_abs() == 0.0));
}

#[test]
fn constants_only_touch_the_zero_mode() {
    let grid = TorusGrid::new(8).unwrap();
    let ctx = LpContext::new(&grid);
    let cutoff = MollifierCutoff::new(0.25).unwrap();
    let times = uniform_time_grid(0.1, 6);
    let mode = CorrelationMode::Independent;
    let path = sample_driver_path(&grid, cutoff, &times, 5, 0, mode).unwrap();
    let exact = TreeConstants::compute(&cutoff, grid.k_max(), mode);
    assert!(exact.c0[0][0][0] > 0.0);
    let (u2, b2) = build_level2(&path, &exact).unwrap();
    let (u2z, b2z) = build_level2(&path, &TreeConstants::zero(0.25)).unwrap();
    for (a, b) in u2.iter().zip(&u2z).chain(b2.iter().zip(&b2z)) {
        assert_eq!(a.sub(b).unwrap().max_abs(), 0.0);
    }

    let tree = build_tree(&path, &exact).unwrap();
    let eval = [2, 4, 6];
    let corr = BundleCorrection { c0: exact.c0, means: None };
    let (corrected, raw) = assemble_bundles(&tree, &ctx, &eval, &corr, 0.05).unwrap();
    let zero = grid.lattice().zero_index();
    let mut moved = 0.0f64;
    for (c, r) in corrected.slots.iter().zip(&raw.slots) {
        assert_eq!(c.name, r.name);
        for (x, y) in c.values.iter().zip(&r.values) {
            let d = x.sub(y).unwrap();
            for comp in 0..d.ncomp() {
                for (i, v) in d.comp(comp).iter().enumerate() {
                    if i == zero {
                        moved = moved.max(v.norm());
                    } else {
                        assert_eq!(v.norm(), 0.0, "slot {} differs off mode 0", c.name);
                    }
                }
            }
        }
    }
    assert!(moved > 0.0);
}

#[test]
fn k_converges_at_first_order() {
    let grid = TorusGrid::new(8).unwrap();
    let cutoff = MollifierCutoff::new(0.25).unwrap();
    let times = uniform_time_grid(0.2, 64);
    let mut ratios = Vec::new();
    for replica in 0..8 {
        let path = sample_driver_path(&grid, cutoff, &times, 11, replica, CorrelationMode::Independent).unwrap();
        let k = |stride: usize| {
            let t: Vec<f64> = times.iter().step_by(stride).copied().collect();
            build_k(&every(&path.u, stride), &t).unwrap().pop().unwrap()
        };
        let (coarse, mid, fine) = (k(4), k(2), k(1));
        ratios.push((coarse.sub(&mid).unwrap().l2_norm(), mid.sub(&fine).unwrap().l2_norm()));
    }
    let num: f64 = ratios.iter().map(|r| r.0 * r.0).sum();
    let den: f64 = ratios.iter().map(|r| r.1 * r.1).sum();
    let order = (num / den).sqrt().log2();
    assert!(order >= 0.9, "order {order}");
}

#[test]
fn level2_norm_grows_with_time() {
    let grid = TorusGrid::new(8).unwrap();
    let ctx = LpContext::new(&grid);
    let cutoff = MollifierCutoff::new(0.25).unwrap();
    let mode = CorrelationMode::Independent;
    let times = geometric_time_grid(1e-3, 1e-1, 12);
    let consts = TreeConstants::compute(&cutoff, grid.k_max(), mode);
    let delta = ExponentRecord::default().delta;
    let samples = 20;
    let mut mean = vec![0.0; times.len()];
    for r in 0..samples {
        let path = sample_driver_path(&grid, cutoff, &times, 21, r, mode).unwrap();
        let (u2, _) = build_level2(&path, &consts).unwrap();
        for (m, f) in u2.iter().enumerate() {
            let comps: Vec<&[_]> = (0..3).map(|c| f.comp(c)).collect();
            mean[m] += ctx.holder_norms(&comps, -delta).into_iter().fold(0.0, f64::max) / samples as f64;
        }
    }
    let pts: Vec<(f64, f64)> = times.iter().zip(&mean).skip(1).map(|(t, v)| (t.ln(), v.ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!(slope >= delta / 4.0 - 0.05, "slope {slope}");
}

#[test]
fn tree_fields_are_solenoidal() {
    let grid = TorusGrid::new(8).unwrap();
    let cutoff = MollifierCutoff::new(0.25).unwrap();
    let times = uniform_time_grid(0.1, 5);
    let mode = CorrelationMode::Identical;
    let path = sample_driver_path(&grid, cutoff, &times, 6, 0, mode).unwrap();
    let tree = build_tree(&path, &TreeConstants::compute(&cutoff, grid.k_max(), mode)).unwrap();
    for f in tree.u2.iter().chain(&tree.b2).chain(&tree.u3).chain(&tree.b3).chain(&tree.k_u) {
        assert!(f.divergence_residual() <= 1e-12 * f.max_abs().max(1e-300));
        assert!(f.is_mean_zero());
    }
}

#[test]
fn c_xi_is_homogeneous() {
    let grid = TorusGrid::new(8).unwrap();
    let ctx = LpContext::new(&grid);
    let cutoff = MollifierCutoff::new(0.25).unwrap();
    let times = uniform_time_grid(0.1, 4);
    let mode = CorrelationMode::Independent;
    let path = sample_driver_path(&grid, cutoff, &times, 8, 0, mode).unwrap();
    let consts = TreeConstants::compute(&cutoff, grid.k_max(), mode);
    let tree = build_tree(&path, &consts).unwrap();
    let corr = BundleCorrection { c0: consts.c0, means: None };
    let (bundle, _) = assemble_bundles(&tree, &ctx, &[2, 4], &corr, 0.05).unwrap();
    let c = bundle.c_xi(&ctx).unwrap();
    assert!(c > 0.0);
    assert_eq!(bundle.scaled(0.0).c_xi(&ctx).unwrap(), 0.0);
    let doubled = bundle.scaled(2.0).c_xi(&ctx).unwrap();
    assert!((doubled - 2.0 * c).abs() <= 1e-12 * c, "{doubled} vs {c}");
}

#[test]
fn tree_is_reproducible() {
    let grid = TorusGrid::new(8).unwrap();
    let cutoff = MollifierCutoff::new(0.25).unwrap();
    let times = uniform_time_grid(0.1, 4);
    let mode = CorrelationMode::Identical;
    let consts = TreeConstants::compute(&cutoff, grid.k_max(), mode);
    let a = build_tree(&sample_driver_path(&grid, cutoff, &times, 9, 2, mode).unwrap(), &consts).unwrap();
    let b = build_tree(&sample_driver_path(&grid, cutoff, &times, 9, 2, mode).unwrap(), &consts).unwrap();
    assert_eq!(a.u3.last().unwrap().data(), b.u3.last().unwrap().data());
}
