use pmhd::config::Experiment;
use pmhd::experiments::{preset, run};
use pmhd::noise::{driver_covariance, sample_driver_path, CorrelationMode, MollifierCutoff};
use pmhd::spectral::TorusGrid;
use pmhd::stats::Welford2;

/// Closed form written out independently: stationary OU with rate |k|^2 driven
/// by Leray-projected noise of strength f(eps k).
fn oracle(eps: f64, same_tag: bool, cross: f64, i: usize, k: [i32; 3], t: f64, j: usize, kp: [i32; 3], s: f64) -> f64 {
    if k == [0, 0, 0] || [k[0] + kp[0], k[1] + kp[1], k[2] + kp[2]] != [0, 0, 0] {
        return 0.0;
    }
    let kf = k.map(|x| x as f64);
    let k2: f64 = kf.iter().map(|x| x * x).sum();
    let r2 = eps * eps * k2;
    let f = if r2 < 1.0 { (1.0 - 1.0 / (1.0 - r2)).exp() } else { 0.0 };
    let p = if i == j { 1.0 } else { 0.0 } - kf[i] * kf[j] / k2;
    let tag = if same_tag { 1.0 } else { cross };
    tag * f * f * (-k2 * (t - s).abs()).exp() / (2.0 * k2) * p
}

#[test]
fn closed_form_matches_oracle() {
    let eps = 0.3;
    let cutoff = MollifierCutoff::new(eps).unwrap();
    for (mode, cross) in [(CorrelationMode::Identical, 1.0), (CorrelationMode::Independent, 0.0)] {
        for k in [[1, 0, 0], [1, -1, 2], [0, 2, 1], [3, 0, 0]] {
            let nk = k.map(|x: i32| -x);
            for (a, c) in [(0, 0), (0, 1), (1, 1)] {
                for i in 0..3 {
                    for j in 0..3 {
                        let got = driver_covariance(cutoff, mode, a, i, k, 0.2, c, j, nk, 0.05);
                        let want = oracle(eps, a == c, cross, i, k, 0.2, j, nk, 0.05);
                        assert!((got - want).abs() <= 1e-15 * want.abs().max(1e-300));
                    }
                }
            }
            assert_eq!(driver_covariance(cutoff, mode, 0, 0, k, 0.1, 0, 0, k, 0.1), 0.0);
        }
    }
}

#[test]
fn stationary_variance_by_sampling() {
    let grid = TorusGrid::new(8).unwrap();
    let eps = 0.25;
    let cutoff = MollifierCutoff::new(eps).unwrap();
    let k = [1, 1, 0];
    let mut acc = Welford2::default();
    for r in 0..20_000 {
        let p = sample_driver_path(&grid, cutoff, &[0.0], 3, r, CorrelationMode::Identical).unwrap();
        let x = p.u[0].coeff(2, k).unwrap();
        let y = p.u[0].coeff(2, [-1, -1, 0]).unwrap();
        acc.push(x * y);
    }
    let (mean, se) = acc.mean_se();
    let want = oracle(eps, true, 1.0, 2, k, 0.0, 2, [-1, -1, 0], 0.0);
    assert!((mean.re - want).abs() < 4.0 * se.0, "{} vs {want}", mean.re);
}

#[test]
fn independent_mode_decouples() {
    let grid = TorusGrid::new(8).unwrap();
    let cutoff = MollifierCutoff::new(0.25).unwrap();
    let p = sample_driver_path(&grid, cutoff, &[0.0, 0.1], 9, 0, CorrelationMode::Independent).unwrap();
    assert_ne!(p.u[1].data(), p.b[1].data());
    assert!(p.b[1].divergence_residual() < 1e-12);
}

#[test]
fn experiment_reports_z_scores() {
    let mut cfg = preset(Experiment::Covariance);
    cfg.mc_samples = 2_000;
    cfg.params.cases = 5;
    let out = run(&cfg).unwrap();
    let csv = &out.artifact("covariance.csv").unwrap().body;
    // header plus five cases per mode
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(&out.config_hash)));
    assert!(out.summary["max_abs_z"]["identical"].as_f64().unwrap().is_finite());
}
