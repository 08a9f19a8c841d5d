mod common;

use std::fs;
use std::process::Command;

use pmhd::config::{Experiment, ExperimentConfig};
use pmhd::error::{ConfigError, SnapshotError};
use pmhd::experiments::{csv_body, preset, run, write_outcome};
use pmhd::snapshot::{read_snapshot, write_snapshot};
use pmhd::spectral::TorusGrid;

fn invalid_fields(cfg: &ExperimentConfig) -> Vec<String> {
    match cfg.validate() {
        Err(ConfigError::Invalid(v)) => v,
        other => panic!("expected invalid config, got {other:?}"),
    }
}

#[test]
fn every_preset_validates_and_round_trips() {
    for e in [
        Experiment::Covariance,
        Experiment::Wick,
        Experiment::RenormSweep,
        Experiment::Vanishing,
        Experiment::ChaosScaling,
        Experiment::TreeNorms,
        Experiment::FixedpointConsistency,
        Experiment::Energy,
        Experiment::Subcriticality,
    ] {
        let cfg = preset(e);
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 16);
    }
}

#[test]
fn hash_tracks_content() {
    let a = preset(Experiment::Wick);
    let mut b = a.clone();
    b.seed = 2;
    assert_ne!(a.hash(), b.hash());
}

#[test]
fn validation_lists_every_field() {
    let mut cfg = preset(Experiment::RenormSweep);
    cfg.epsilons.clear();
    cfg.output.clear();
    let bad = invalid_fields(&cfg);
    assert!(bad.contains(&"epsilon list empty".to_string()));
    assert!(bad.contains(&"output path empty".to_string()));

    let mut cfg = preset(Experiment::RenormSweep);
    cfg.epsilons = vec![0.25, 0.5];
    assert_eq!(invalid_fields(&cfg), vec!["epsilon list not strictly decreasing".to_string()]);

    let mut cfg = preset(Experiment::Wick);
    cfg.mc_samples = 10;
    assert_eq!(invalid_fields(&cfg), vec!["mc_samples must be at least 100 for wick".to_string()]);

    let mut cfg = preset(Experiment::FixedpointConsistency);
    cfg.exponents.beta = 0.0;
    assert_eq!(invalid_fields(&cfg), vec!["exponents: delta/2 < beta".to_string()]);

    let mut cfg = preset(Experiment::Energy);
    cfg.grid.n = 7;
    cfg.schema_version = 9;
    assert_eq!(invalid_fields(&cfg).len(), 2);
}

#[test]
fn reruns_reproduce_csv_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = preset(Experiment::Energy);
    for tag in ["a", "b"] {
        write_outcome(&run(&cfg).unwrap(), &dir.path().join(tag)).unwrap();
    }
    for name in ["energy_identities.csv", "energy.csv"] {
        let a = fs::read_to_string(dir.path().join("a").join(name)).unwrap();
        let b = fs::read_to_string(dir.path().join("b").join(name)).unwrap();
        assert!(a.starts_with("# generated_unix="));
        assert_eq!(csv_body(&a), csv_body(&b));
    }
    let v = read_snapshot(&dir.path().join("a/velocity.pmhd")).unwrap();
    assert!(!v.is_empty());
}

#[test]
fn renorm_reruns_agree_without_timing() {
    let mut cfg = preset(Experiment::RenormSweep);
    cfg.grid.k_max = Some(8);
    let strip = |body: &str| -> Vec<String> {
        let mut lines = body.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let skip = header.iter().position(|h| *h == "runtime_ms").unwrap();
        lines
            .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != skip).map(|(_, x)| x).collect::<Vec<_>>().join(","))
            .collect()
    };
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    let name = "renorm_constants.csv";
    assert_eq!(strip(&a.artifact(name).unwrap().body), strip(&b.artifact(name).unwrap().body));
}

#[test]
fn snapshot_round_trip_and_magic() {
    let grid = TorusGrid::new(8).unwrap();
    let f = common::random_real(&grid, 3, 5);
    let g = common::random_real(&grid, 3, 6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.pmhd");
    write_snapshot(&path, &[(0.0, &f), (0.5, &g)]).unwrap();
    let back = read_snapshot(&path).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[1].0, 0.5);
    assert_eq!(back[0].1.data(), f.data());
    assert_eq!(back[1].1.data(), g.data());

    let text = fs::read_to_string(&path).unwrap().replacen("PMHD1", "PMHD0", 1);
    fs::write(&path, text).unwrap();
    assert!(matches!(read_snapshot(&path), Err(SnapshotError::Magic)));
}

fn pmhd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pmhd"))
}

#[test]
fn binary_rejects_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset(Experiment::RenormSweep);
    cfg.epsilons.clear();
    cfg.output.clear();
    let path = dir.path().join("bad.json");
    fs::write(&path, cfg.to_json()).unwrap();
    let out = pmhd().args(["renorm-sweep", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("invalid config:"));
    assert!(err.contains("  - epsilon list empty"));
    assert!(err.contains("  - output path empty"));

    let out = pmhd().args(["wick", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn binary_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = pmhd().args(["subcrit", "--seed", "3", "--out"]).arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("check PASS"));
    for name in ["subcriticality.csv", "subcriticality_trace.json", "summary.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let mut cfg = preset(Experiment::Subcriticality);
    cfg.seed = 3;
    cfg.output = dir.path().display().to_string();
    assert!(text.contains(&format!("config_hash {}", cfg.hash())));

    let emitted = pmhd().args(["energy", "--emit-config", "--seed", "9"]).output().unwrap();
    assert!(emitted.status.success());
    let cfg = ExperimentConfig::from_json(&String::from_utf8_lossy(&emitted.stdout)).unwrap();
    assert_eq!(cfg.experiment, Experiment::Energy);
    assert_eq!(cfg.seed, 9);
}
