use std::f64::consts::PI;

use pmhd::config::Experiment;
use pmhd::experiments::{preset, run};
use pmhd::lattice::Lattice;
use pmhd::noise::{sample_driver_path, uniform_time_grid, CorrelationMode, MollifierCutoff};
use pmhd::renorm::{
    c0_family, c0_matrix, c23_bracket, c23_constant, support_truncated, tree_means, vanishing_constant_check,
    VanishingKind, VanishingParams,
};
use pmhd::spectral::{SpectralField, TorusGrid};
use pmhd::stats::{loglog_fit, Welford};
use pmhd::tree::{build_level2, TreeConstants};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (1.0 - 1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// Direct triple loop of `(2 pi)^-3 sum f^2 (delta - k k / |k|^2) / (2 |k|^2)`.
fn c0_oracle(eps: f64, k_max: i32) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for a in -k_max..=k_max {
        for b in -k_max..=k_max {
            for c in -k_max..=k_max {
                let k = [a as f64, b as f64, c as f64];
                let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                if k2 == 0.0 {
                    continue;
                }
                let w = bump(eps * eps * k2).powi(2) / (2.0 * k2) / (2.0 * PI).powi(3);
                for i in 0..3 {
                    for j in 0..3 {
                        out[i][j] += w * (if i == j { 1.0 } else { 0.0 } - k[i] * k[j] / k2);
                    }
                }
            }
        }
    }
    out
}

/// Mode-0 coefficient of `f^i g^j`.
fn mode_zero(f: &SpectralField, i: usize, g: &SpectralField, j: usize) -> f64 {
    let lat = f.grid().lattice();
    (0..lat.len()).map(|m| (f.comp(i)[m] * g.comp(j)[lat.neg_index(m)]).re).sum::<f64>() * (2.0 * PI).powf(-1.5)
}

#[test]
fn c0_matches_direct_sum() {
    for (eps, k) in [(0.2, 8), (0.5, 3), (0.1, 6)] {
        let got = c0_matrix(&MollifierCutoff::new(eps).unwrap(), k);
        let want = c0_oracle(eps, k);
        for i in 0..3 {
            for j in 0..3 {
                assert!((got[i][j] - want[i][j]).abs() <= 1e-13 * want[0][0]);
            }
        }
    }
}

#[test]
fn c0_family_by_mode() {
    let c = MollifierCutoff::new(0.25).unwrap();
    let [uu, bb, ub, bu] = c0_family(&c, 6, CorrelationMode::Independent);
    assert_eq!(uu, bb);
    assert!(ub.iter().flatten().chain(bu.iter().flatten()).all(|&x| x == 0.0));
    let [uu, _, ub, _] = c0_family(&c, 6, CorrelationMode::Identical);
    assert_eq!(uu, ub);
}

#[test]
fn c0_is_pointwise_second_moment() {
    let grid = TorusGrid::new(8).unwrap();
    let cutoff = MollifierCutoff::new(0.25).unwrap();
    let want = c0_matrix(&cutoff, grid.k_max())[1][1];
    let mut acc = Welford::default();
    for r in 0..4_000 {
        let p = sample_driver_path(&grid, cutoff, &[0.0], 21, r, CorrelationMode::Identical).unwrap();
        acc.push(mode_zero(&p.u[0], 1, &p.u[0], 1) * (2.0 * PI).powf(-1.5));
    }
    assert!((acc.mean() - want).abs() < 4.0 * acc.se(), "{} vs {want}", acc.mean());
}

#[test]
fn c0_slope_is_minus_one() {
    let eps: Vec<f64> = (2..=6).map(|p| 0.5f64.powi(p)).collect();
    let vals: Vec<f64> = eps.iter().map(|&e| c0_matrix(&MollifierCutoff::new(e).unwrap(), 64)[0][0]).collect();
    let fit = loglog_fit(&eps, &vals).unwrap();
    assert!((fit.slope + 1.0).abs() <= 0.15, "slope {}", fit.slope);
    assert!(!support_truncated(&MollifierCutoff::new(eps[4]).unwrap(), 64));
    assert!(support_truncated(&MollifierCutoff::new(0.01).unwrap(), 64));
}

#[test]
fn printed_zero_constants_vanish() {
    let lat = Lattice::new(8).unwrap();
    let cutoff = MollifierCutoff::new(0.2).unwrap();
    for kind in [VanishingKind::Ct5, VanishingKind::C3, VanishingKind::C378] {
        for (a, b, c) in [(0, 0, 0), (0, 1, 2), (2, 2, 1), (1, 0, 1)] {
            let r = vanishing_constant_check(kind, VanishingParams { a, b, c, t: 0.3 }, &cutoff, &lat);
            assert!(r.scale > 0.0);
            assert!(r.pass(), "{kind:?} {r:?}");
        }
    }
}

#[test]
fn coupled_bracket_cancels() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let k1 = [0; 3].map(|_| rng.random_range(-8..=8) as f64);
        let k2 = [0; 3].map(|_| rng.random_range(-8..=8) as f64);
        let ix: [usize; 4] = [0; 4].map(|_| rng.random_range(0..3));
        let (v, abs) = c23_bracket(k1, k2, ix[0], ix[1], ix[2], ix[3]);
        assert!(v.abs() <= 1e-12 * abs.max(1.0));
    }
    let grid = TorusGrid::new(8).unwrap();
    let r = c23_constant(0, 1, 0.2, &MollifierCutoff::new(0.3).unwrap(), grid.lattice());
    assert!(r.pass());
}

#[test]
fn level2_means_match_sampling() {
    // exact level-2 second moments against discrete-time sampling on a fine grid
    let grid = TorusGrid::new(8).unwrap();
    let cutoff = MollifierCutoff::new(0.25).unwrap();
    let mode = CorrelationMode::Independent;
    let times = uniform_time_grid(0.2, 200);
    let t = *times.last().unwrap();
    let means = tree_means(grid.lattice(), &cutoff, mode, &[t]);
    let consts = TreeConstants::compute(&cutoff, grid.k_max(), mode);
    let (mut uu, mut bu) = (Welford::default(), Welford::default());
    for r in 0..1_500 {
        let p = sample_driver_path(&grid, cutoff, &times, 8, r, mode).unwrap();
        let (u2, b2) = build_level2(&p, &consts).unwrap();
        let m = times.len() - 1;
        uu.push((0..3).map(|i| mode_zero(&u2[m], i, &u2[m], i)).sum::<f64>());
        bu.push(mode_zero(&b2[m], 0, &u2[m], 1));
    }
    let want: f64 = (0..3).map(|i| means.level2[0][0][i][i]).sum::<f64>() * (2.0 * PI).powf(1.5);
    assert!((uu.mean() - want).abs() < 4.0 * uu.se() + 0.02 * want, "{} vs {want}", uu.mean());
    assert!(bu.mean().abs() < 4.0 * bu.se());
}

#[test]
fn sweep_and_vanishing_experiments() {
    let out = run(&preset(Experiment::RenormSweep)).unwrap();
    assert!(out.ok, "{}", out.summary);
    let csv = &out.artifact("renorm_constants.csv").unwrap().body;
    assert!(csv.starts_with("label,i,j,epsilon,k_max,t,value,runtime_ms,config_hash\n"));
    assert_eq!(csv.lines().count(), 1 + 5 * 4 * 9);
    let mut cfg = preset(Experiment::Vanishing);
    cfg.mc_samples = 300;
    let out = run(&cfg).unwrap();
    assert_eq!(out.summary["vanishing_pass"], true);
    assert_eq!(out.summary["bracket_pass"], true);
    assert_eq!(out.artifact("vanishing_constants.csv").unwrap().body.lines().count(), 4);
}
