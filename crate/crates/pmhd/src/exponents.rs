//! Regularity exponents of the fixed-point argument and their admissibility.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentRecord {
    pub delta0: f64,
    pub z: f64,
    pub delta: f64,
    pub beta: f64,
}

impl Default for ExponentRecord {
    fn default() -> Self {
        Self { delta0: 0.25, z: 0.6, delta: 0.05, beta: 0.10 }
    }
}

impl ExponentRecord {
    /// Weight exponent of the rough remainder norm, `(1/2 - delta0 + z) / 2`.
    pub fn rough_weight(&self) -> f64 {
        (0.5 - self.delta0 + self.z) / 2.0
    }

    /// Weight exponent of the smooth remainder norm, `(1/2 + beta + z) / 2`.
    pub fn smooth_weight(&self) -> f64 {
        (0.5 + self.beta + self.z) / 2.0
    }
}

/// Names of the violated constraints; empty when the record is admissible.
pub fn validate_exponents(e: &ExponentRecord) -> Vec<String> {
    let mut bad = Vec::new();
    let mut check = |ok: bool, name: &str| {
        if !ok {
            bad.push(name.to_string());
        }
    };
    let ExponentRecord { delta0, z, delta, beta } = *e;
    check(delta0 > 0.0 && delta0 < 0.5, "0 < delta0 < 1/2");
    check(z > 0.5 && z < 0.5 + delta0, "1/2 < z < 1/2 + delta0");
    check(delta > 0.0, "delta > 0");
    check(delta < delta0, "delta < delta0");
    check(delta < (1.0 - 2.0 * delta0) / 3.0, "delta < (1 - 2 delta0)/3");
    check(delta < (1.0 - z) / 4.0, "delta < (1 - z)/4");
    check(delta < 2.0 * z - 1.0, "delta < 2z - 1");
    check(delta / 2.0 < beta, "delta/2 < beta");
    check(beta < z + 2.0 * delta - 0.5, "beta < z + 2 delta - 1/2");
    check(z + 2.0 * delta - 0.5 < 0.5 - 2.0 * delta, "z + 2 delta - 1/2 < 1/2 - 2 delta");
    check(delta <= delta0, "delta <= delta0");
    check(delta0 < 0.5 - 1.5 * delta, "delta0 < 1/2 - 3 delta/2");
    bad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_pass() {
        assert!(validate_exponents(&ExponentRecord::default()).is_empty());
    }

    #[test]
    fn equal_deltas_fail_upper_bound() {
        let e = ExponentRecord { delta0: 0.25, z: 0.6, delta: 0.25, beta: 0.2 };
        let bad = validate_exponents(&e);
        assert!(bad.iter().any(|b| b == "delta < (1 - z)/4"));
    }

    #[test]
    fn zero_beta_fails() {
        let e = ExponentRecord { beta: 0.0, ..Default::default() };
        assert_eq!(validate_exponents(&e), vec!["delta/2 < beta".to_string()]);
    }
}
