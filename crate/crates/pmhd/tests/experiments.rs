use pmhd::config::{Experiment, GridParams, TimeGridSpec};
use pmhd::experiments::{
    csv_body, preset, relative_changes, renormalization_effective, run, top_blocks_decay, BlockEnergy,
};

fn block(q: i32, scaled: f64) -> BlockEnergy {
    BlockEnergy { q, mean: scaled, se: 0.0, scaled }
}

#[test]
fn decay_looks_at_the_top_three_blocks() {
    let rising_low = [block(-1, 0.1), block(0, 5.0), block(1, 3.0), block(2, 3.0)];
    assert!(top_blocks_decay(&rising_low));
    let rising_top = [block(0, 3.0), block(1, 2.0), block(2, 2.5)];
    assert!(!top_blocks_decay(&rising_top));
    assert!(!top_blocks_decay(&rising_low[..2]));
}

#[test]
fn renormalization_criterion() {
    assert_eq!(relative_changes(&[1.0, 1.5, 3.0]), vec![0.5, 1.0]);
    assert!(renormalization_effective(&[1.0, 1.05, 1.08, 1.09], &[1.0, 1.3, 1.7, 2.2]));
    assert!(!renormalization_effective(&[1.0, 1.05, 1.2, 1.21], &[1.0, 1.3, 1.7, 2.2]));
    assert!(!renormalization_effective(&[1.0, 1.05, 1.08, 1.09], &[1.0, 1.3, 1.4, 2.2]));
    assert!(!renormalization_effective(&[1.0, 1.0], &[1.0, 2.0]));
}

#[test]
fn small_chaos_scaling_run() {
    let mut cfg = preset(Experiment::ChaosScaling);
    cfg.grid = GridParams { n: 8, dealias_fraction: 2.0 / 3.0, k_max: None };
    cfg.epsilons = vec![0.25];
    cfg.mc_samples = 20;
    let out = run(&cfg).unwrap();
    let body = csv_body(&out.artifact("chaos_scaling.csv").unwrap().body);
    let rows: Vec<Vec<f64>> = body
        .lines()
        .skip(1)
        .map(|l| l.split(',').take(4).map(|x| x.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() >= 3);
    for r in &rows {
        assert!(r[1] > 0.0 && r[2] >= 0.0);
    }
    assert_eq!(out.summary["blocks"].as_array().unwrap().len(), rows.len());
}

#[test]
fn small_tree_norms_run() {
    let mut cfg = preset(Experiment::TreeNorms);
    cfg.grid = GridParams { n: 8, dealias_fraction: 2.0 / 3.0, k_max: None };
    cfg.epsilons = vec![0.5, 0.25, 0.125];
    cfg.mc_samples = 4;
    cfg.t_grid = TimeGridSpec::Uniform { t_max: 0.05, steps: 8 };
    let out = run(&cfg).unwrap();
    let c_xi = csv_body(&out.artifact("c_xi.csv").unwrap().body);
    assert_eq!(c_xi.lines().count(), 4);
    let slots = csv_body(&out.artifact("bundle_norms_corrected_eps0.csv").unwrap().body);
    assert!(slots.starts_with("slot,t,norm,regularity_label,config_hash\n"));
    assert_eq!(slots.lines().count(), 1 + 21 * 3);
    for name in ["bundle_norms_raw_eps2.csv", "bundle_norms_corrected_eps2.csv"] {
        assert!(out.artifact(name).is_some());
    }
    let corrected = out.summary["corrected"].as_array().unwrap();
    let raw = out.summary["raw"].as_array().unwrap();
    assert_eq!(corrected.len(), 3);
    for (c, r) in corrected.iter().zip(raw) {
        assert!(c.as_f64().unwrap() > 0.0 && r.as_f64().unwrap() > 0.0);
    }
}
