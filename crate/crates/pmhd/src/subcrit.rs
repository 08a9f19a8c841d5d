//! Power counting for local subcriticality of quadratic parabolic systems
//! driven by space-time white noise in `N` spatial dimensions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum System {
    Mhd,
    HallMhd,
}

impl FromStr for System {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mhd" => Ok(System::Mhd),
            "hall-mhd" | "hall" => Ok(System::HallMhd),
            other => Err(format!("unknown system {other}")),
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            System::Mhd => "mhd",
            System::HallMhd => "hall-mhd",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SubcritVerdict {
    pub system: System,
    pub dimension: u32,
    /// Order of the linear operator.
    pub beta: f64,
    /// Regularity of the noise.
    pub alpha: f64,
    /// Regularity of the linear solution, `beta + alpha`.
    pub solution: f64,
    /// Regularity of the nonlinear term.
    pub nonlinearity: f64,
    pub subcritical: bool,
    /// Equivalent condition on the dimension, `bound > N`.
    pub dimension_bound: u32,
    pub trace: Vec<String>,
}

/// Compares the regularity of the nonlinearity to that of the noise. Values are
/// half-integers, so every comparison is exact in floating point.
pub fn subcriticality(system: System, dimension: u32) -> SubcritVerdict {
    let n = dimension as f64;
    let beta = 2.0;
    let alpha = -1.0 - n / 2.0;
    let solution = beta + alpha;
    let mut trace = vec![
        format!("N = {dimension}"),
        format!("beta = {beta}"),
        format!("alpha = -1 - N/2 = {alpha}"),
        format!("beta + alpha = {solution}"),
    ];
    let (nonlinearity, dimension_bound) = match system {
        System::Mhd => {
            let h = 2.0 * beta + 2.0 * alpha - 1.0;
            trace.push(format!("2 beta + 2 alpha - 1 = {h}"));
            trace.push(format!("{h} > {alpha} <=> 4 > {dimension}"));
            (h, 4)
        }
        System::HallMhd => {
            let one = beta + alpha - 1.0;
            let h = one + one;
            trace.push(format!("beta + alpha - 1 = {one}"));
            trace.push(format!("(beta + alpha - 1) + (beta + alpha - 1) = {h}"));
            trace.push(format!("{h} > {alpha} <=> 2 > {dimension}"));
            (h, 2)
        }
    };
    let subcritical = nonlinearity > alpha;
    trace.push(format!("locally subcritical: {}", if subcritical { "yes" } else { "no" }));
    SubcritVerdict { system, dimension, beta, alpha, solution, nonlinearity, subcritical, dimension_bound, trace }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_agrees_with_inequality() {
        for sys in [System::Mhd, System::HallMhd] {
            for n in 1..8 {
                let v = subcriticality(sys, n);
                assert_eq!(v.subcritical, v.dimension_bound > n);
            }
        }
    }
}
