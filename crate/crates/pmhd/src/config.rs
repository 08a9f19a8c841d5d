//! Experiment configuration files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConfigError;
use crate::exponents::{validate_exponents, ExponentRecord};
use crate::noise::{geometric_time_grid, uniform_time_grid, CorrelationMode};
use crate::spectral::TorusGrid;
use crate::subcrit::System;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Covariance,
    Wick,
    RenormSweep,
    Vanishing,
    ChaosScaling,
    TreeNorms,
    FixedpointConsistency,
    Energy,
    Subcriticality,
}

impl Experiment {
    fn uses_epsilon(self) -> bool {
        !matches!(self, Experiment::Subcriticality)
    }

    fn uses_samples(self) -> bool {
        matches!(self, Experiment::Covariance | Experiment::Wick | Experiment::ChaosScaling | Experiment::TreeNorms)
    }

    fn uses_exponents(self) -> bool {
        matches!(self, Experiment::FixedpointConsistency | Experiment::TreeNorms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    /// Collocation points per axis.
    pub n: usize,
    #[serde(default = "default_fraction")]
    pub dealias_fraction: f64,
    /// Lattice radius for grid-free lattice sums; defaults to the grid's.
    #[serde(default)]
    pub k_max: Option<i32>,
}

fn default_fraction() -> f64 {
    2.0 / 3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TimeGridSpec {
    Uniform { t_max: f64, steps: usize },
    /// Zero followed by `nodes` geometric times on `[t_min, t_max]`.
    Geometric { t_min: f64, t_max: f64, nodes: usize },
}

impl TimeGridSpec {
    pub fn times(&self) -> Vec<f64> {
        match *self {
            TimeGridSpec::Uniform { t_max, steps } => uniform_time_grid(t_max, steps),
            TimeGridSpec::Geometric { t_min, t_max, nodes } => geometric_time_grid(t_min, t_max, nodes),
        }
    }

    pub fn t_max(&self) -> f64 {
        match *self {
            TimeGridSpec::Uniform { t_max, .. } | TimeGridSpec::Geometric { t_max, .. } => t_max,
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut bad = Vec::new();
        match *self {
            TimeGridSpec::Uniform { t_max, steps } => {
                if !(t_max > 0.0) {
                    bad.push("t_grid.t_max must be positive".into());
                }
                if steps == 0 {
                    bad.push("t_grid.steps must be positive".into());
                }
            }
            TimeGridSpec::Geometric { t_min, t_max, nodes } => {
                if !(t_min > 0.0 && t_max > t_min) {
                    bad.push("t_grid needs 0 < t_min < t_max".into());
                }
                if nodes == 0 {
                    bad.push("t_grid.nodes must be positive".into());
                }
            }
        }
        bad
    }
}

/// Knobs only some experiments read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraParams {
    /// Chaos-scaling exponent `eta` and extra decay margin.
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_margin")]
    pub block_margin: f64,
    /// Subcriticality cases.
    #[serde(default)]
    pub systems: Vec<(System, u32)>,
    /// Amplitude of the random initial data of the solvers.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_tol")]
    pub picard_tol: f64,
    /// Random tuples of the covariance and bracket checks.
    #[serde(default = "default_cases")]
    pub cases: usize,
}

fn default_eta() -> f64 {
    0.1
}
fn default_margin() -> f64 {
    0.2
}
fn default_amplitude() -> f64 {
    0.3
}
fn default_tol() -> f64 {
    1e-10
}
fn default_cases() -> usize {
    20
}

impl Default for ExtraParams {
    fn default() -> Self {
        Self {
            eta: default_eta(),
            block_margin: default_margin(),
            systems: Vec::new(),
            amplitude: default_amplitude(),
            picard_tol: default_tol(),
            cases: default_cases(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub grid: GridParams,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub exponents: ExponentRecord,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mc_samples: usize,
    pub t_grid: TimeGridSpec,
    #[serde(default = "default_mode")]
    pub correlation: CorrelationMode,
    pub output: String,
    #[serde(default)]
    pub params: ExtraParams,
}

fn default_mode() -> CorrelationMode {
    CorrelationMode::Identical
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Lists every violated field.
    pub fn problems(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            bad.push(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if let Err(e) = TorusGrid::with_fraction(self.grid.n, self.grid.dealias_fraction) {
            bad.push(format!("grid: {e}"));
        }
        if matches!(self.grid.k_max, Some(k) if k < 1) {
            bad.push("grid.k_max must be positive".into());
        }
        if self.experiment.uses_epsilon() {
            if self.epsilons.is_empty() {
                bad.push("epsilon list empty".into());
            } else {
                if self.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                    bad.push("epsilon values must be positive".into());
                }
                if self.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
                    bad.push("epsilon list not strictly decreasing".into());
                }
            }
        }
        if self.experiment.uses_samples() && self.mc_samples == 0 {
            bad.push("mc_samples must be positive".into());
        }
        if self.experiment == Experiment::Wick && self.mc_samples > 0 && self.mc_samples < 100 {
            bad.push("mc_samples must be at least 100 for wick".into());
        }
        if self.experiment.uses_exponents() {
            bad.extend(validate_exponents(&self.exponents).into_iter().map(|c| format!("exponents: {c}")));
        }
        if self.experiment == Experiment::Subcriticality && self.params.systems.iter().any(|(_, n)| *n == 0) {
            bad.push("dimension must be at least 1".into());
        }
        bad.extend(self.t_grid.problems());
        if self.output.is_empty() {
            bad.push("output path empty".into());
        }
        bad
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = self.problems();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(bad))
        }
    }

    /// First 16 hex digits of the SHA-256 of the compact serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string()
    }

    pub fn k_max(&self) -> i32 {
        self.grid.k_max.unwrap_or_else(|| {
            TorusGrid::with_fraction(self.grid.n, self.grid.dealias_fraction).map(|g| g.k_max()).unwrap_or(1)
        })
    }
}

/// Fixed-width float formatting with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
