//! Littlewood-Paley blocks and Hölder-Besov norms on the truncated lattice.
//!
//! Radial cutoffs: `theta` is a smooth step equal to 1 on `[0, 4/7]` and 0 on
//! `[8/7, inf)`, built by integrating the bump `exp(1 - 1/(1 - x^2))`. Then
//! `chi = theta`, `rho(r) = theta(r/2) - theta(r)` and `rho_j(r) = rho(r / 2^j)`,
//! so `chi + sum_{j <= J} rho_j = theta(r / 2^{J+1})` telescopes to 1.

use std::sync::{Arc, OnceLock};

use crate::error::FieldError;
use crate::lattice::Lattice;
use crate::spectral::{SpectralField, TorusGrid, C64};

const STEP_TABLE: usize = 1 << 16;
const INNER: f64 = 4.0 / 7.0;
const OUTER: f64 = 8.0 / 7.0;

pub fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - x * x)).exp()
    }
}

/// Normalized cumulative integral of the bump mapped to `[0, 1]`.
fn step_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let h = 1.0 / STEP_TABLE as f64;
        let mut cum = vec![0.0; STEP_TABLE + 1];
        let mut prev = bump(-1.0);
        for i in 1..=STEP_TABLE {
            let cur = bump(2.0 * i as f64 * h - 1.0);
            let mid = bump(2.0 * (i as f64 - 0.5) * h - 1.0);
            cum[i] = cum[i - 1] + h * (prev + 4.0 * mid + cur) / 6.0;
            prev = cur;
        }
        let total = cum[STEP_TABLE];
        cum.iter_mut().for_each(|v| *v /= total);
        cum
    })
}

/// Smooth step from 0 at `s <= 0` to 1 at `s >= 1`.
fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let t = step_table();
    let x = s * STEP_TABLE as f64;
    let i = (x.floor() as usize).min(STEP_TABLE - 1);
    let w = x - i as f64;
    t[i] * (1.0 - w) + t[i + 1] * w
}

/// 1 on `[0, 4/7]`, 0 on `[8/7, inf)`.
pub fn theta(r: f64) -> f64 {
    1.0 - smooth_step((r - INNER) / (OUTER - INNER))
}

pub fn chi(r: f64) -> f64 {
    theta(r)
}

pub fn rho(r: f64) -> f64 {
    theta(r / 2.0) - theta(r)
}

/// Radial profile of block `q` (`q = -1` is `chi`).
pub fn block_profile(q: i32, r: f64) -> f64 {
    if q < 0 {
        chi(r)
    } else {
        rho(r / f64::powi(2.0, q))
    }
}

/// Block multipliers realized on a lattice, blocks `-1..=j_max`.
#[derive(Debug, Clone)]
pub struct DyadicPartition {
    j_max: i32,
    weights: Vec<Vec<f64>>,
}

impl DyadicPartition {
    pub fn new(lattice: &Lattice) -> Self {
        let k_max = lattice.k_max() as f64;
        let mut j_max = k_max.log2().ceil() as i32 + 1;
        let r_top = (3.0f64).sqrt() * k_max;
        // drop blocks whose annulus misses the lattice entirely
        while j_max > 0 && INNER * f64::powi(2.0, j_max) >= r_top {
            j_max -= 1;
        }
        let max_k2 = 3 * (lattice.k_max() * lattice.k_max()) as usize;
        let weights = (-1..=j_max)
            .map(|q| {
                let by_k2: Vec<f64> = (0..=max_k2)
                    .map(|k2| block_profile(q, (k2 as f64).sqrt()))
                    .collect();
                lattice.k2_table().iter().map(|&k2| by_k2[k2 as usize]).collect()
            })
            .collect();
        Self { j_max, weights }
    }

    pub fn for_grid(grid: &TorusGrid) -> Self {
        Self::new(grid.lattice())
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    pub fn blocks(&self) -> std::ops::RangeInclusive<i32> {
        -1..=self.j_max
    }

    pub fn count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self, q: i32) -> &[f64] {
        &self.weights[(q + 1) as usize]
    }

    pub fn weight(&self, q: i32, m: usize) -> f64 {
        self.weights[(q + 1) as usize][m]
    }

    pub fn check_block(&self, q: i32) -> Result<(), FieldError> {
        if q < -1 || q > self.j_max {
            Err(FieldError::BlockRange { j: q, j_max: self.j_max })
        } else {
            Ok(())
        }
    }
}

/// Grid plus its partition; the usual handle for norm evaluation.
#[derive(Debug, Clone)]
pub struct LpContext {
    pub grid: Arc<TorusGrid>,
    pub part: Arc<DyadicPartition>,
}

impl LpContext {
    pub fn new(grid: &Arc<TorusGrid>) -> Self {
        Self { grid: grid.clone(), part: Arc::new(DyadicPartition::for_grid(grid)) }
    }

    pub fn block_coeffs(&self, coeffs: &[C64], q: i32) -> Vec<C64> {
        coeffs.iter().zip(self.part.weights(q)).map(|(c, w)| c * w).collect()
    }

    /// Physical samples of every block of a scalar, blocks `-1..=j_max`.
    pub fn blocks_physical(&self, coeffs: &[C64]) -> Vec<Vec<f64>> {
        let blocks: Vec<Vec<C64>> = self.part.blocks().map(|q| self.block_coeffs(coeffs, q)).collect();
        let refs: Vec<&[C64]> = blocks.iter().map(|b| b.as_slice()).collect();
        self.grid.synthesize_many(&refs)
    }

    /// `||Delta_q f||_{L^p}` for every block, by collocation.
    pub fn block_lp_norms(&self, coeffs: &[C64], p: f64) -> Vec<f64> {
        let dv = self.grid.cell_volume();
        self.blocks_physical(coeffs)
            .iter()
            .map(|b| lp_norm(b, p, dv))
            .collect()
    }

    /// `B^alpha_{p,q}` norm of a scalar.
    pub fn besov_norm_scalar(&self, coeffs: &[C64], idx: BesovIndex) -> f64 {
        let norms = self.block_lp_norms(coeffs, idx.p);
        let weighted = self
            .part
            .blocks()
            .zip(norms)
            .map(|(q, v)| f64::powf(2.0, q as f64 * idx.alpha) * v);
        lq_combine(weighted, idx.q)
    }

    /// `C^alpha` norm of a scalar.
    pub fn holder_norm_scalar(&self, coeffs: &[C64], alpha: f64) -> f64 {
        self.besov_norm_scalar(coeffs, BesovIndex::holder(alpha))
    }

    /// Norm of a multi-component field: the largest component norm.
    pub fn besov_norm(&self, f: &SpectralField, idx: BesovIndex) -> f64 {
        (0..f.ncomp())
            .map(|c| self.besov_norm_scalar(f.comp(c), idx))
            .fold(0.0, f64::max)
    }

    pub fn holder_norm(&self, f: &SpectralField, alpha: f64) -> f64 {
        self.besov_norm(f, BesovIndex::holder(alpha))
    }

    /// `C^alpha` norms of many scalars, transforming blocks two at a time.
    pub fn holder_norms(&self, fields: &[&[C64]], alpha: f64) -> Vec<f64> {
        let nb = self.part.count();
        let mut all = Vec::with_capacity(fields.len() * nb);
        for f in fields {
            for q in self.part.blocks() {
                all.push(self.block_coeffs(f, q));
            }
        }
        let refs: Vec<&[C64]> = all.iter().map(|b| b.as_slice()).collect();
        let phys = self.grid.synthesize_many(&refs);
        phys.chunks(nb)
            .map(|blocks| {
                self.part
                    .blocks()
                    .zip(blocks)
                    .map(|(q, b)| f64::powf(2.0, q as f64 * alpha) * sup_abs(b))
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    pub fn lp_block(&self, f: &SpectralField, q: i32) -> Result<SpectralField, FieldError> {
        self.part.check_block(q)?;
        let w = self.part.weights(q);
        Ok(f.map_modes(|m| w[m]))
    }

    /// `S_j f = sum_{i <= j-1} Delta_i f` (with `S_{-1} = 0`).
    pub fn low_part(&self, coeffs: &[C64], j: i32) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); coeffs.len()];
        for i in -1..j.min(self.part.j_max() + 1) {
            for ((o, c), w) in out.iter_mut().zip(coeffs).zip(self.part.weights(i)) {
                *o += c * w;
            }
        }
        out
    }

    /// Ratios `||S_j f||_inf 2^{j alpha} / ||f||_{C^alpha}` for `j = -1..=j_max+1`.
    pub fn low_freq_bound_check(&self, coeffs: &[C64], alpha: f64, limit: f64) -> LowFreqReport {
        let norm = self.holder_norm_scalar(coeffs, alpha);
        let ratios: Vec<(i32, f64)> = (-1..=self.part.j_max() + 1)
            .map(|j| {
                if norm == 0.0 {
                    return (j, 0.0);
                }
                let s = sup_abs(&self.grid.synthesize(&self.low_part(coeffs, j)));
                (j, s * f64::powf(2.0, j as f64 * alpha) / norm)
            })
            .collect();
        let flagged = ratios.iter().filter(|(_, r)| *r > limit).map(|(j, _)| *j).collect();
        LowFreqReport { alpha, ratios, flagged }
    }
}

#[derive(Debug, Clone)]
pub struct LowFreqReport {
    pub alpha: f64,
    pub ratios: Vec<(i32, f64)>,
    pub flagged: Vec<i32>,
}

impl LowFreqReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().map(|r| r.1).fold(0.0, f64::max)
    }
}

/// Regularity and integrability indices; `p` and `q` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesovIndex {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
}

impl BesovIndex {
    pub fn new(alpha: f64, p: f64, q: f64) -> Result<Self, String> {
        if !(p >= 1.0) || !(q >= 1.0) {
            return Err(format!("integrability indices must be >= 1, got p={p}, q={q}"));
        }
        if !alpha.is_finite() {
            return Err("alpha must be finite".into());
        }
        Ok(Self { alpha, p, q })
    }

    pub fn holder(alpha: f64) -> Self {
        Self { alpha, p: f64::INFINITY, q: f64::INFINITY }
    }
}

pub fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn lp_norm(v: &[f64], p: f64, dv: f64) -> f64 {
    if p.is_infinite() {
        sup_abs(v)
    } else {
        (v.iter().map(|x| x.abs().powf(p)).sum::<f64>() * dv).powf(1.0 / p)
    }
}

fn lq_combine(vals: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        vals.fold(0.0, f64::max)
    } else {
        vals.map(|v| v.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles() {
        assert_eq!(theta(0.3), 1.0);
        assert_eq!(theta(1.2), 0.0);
        assert!((theta(6.0 / 7.0) - 0.5).abs() < 1e-9);
        for i in 0..2000 {
            let r = i as f64 * 0.01;
            let total: f64 = (-1..=12).map(|q| block_profile(q, r)).sum();
            assert!((total - 1.0).abs() < 1e-12, "r={r} total={total}");
        }
    }

    #[test]
    fn block_counts() {
        assert_eq!(DyadicPartition::new(&Lattice::new(5).unwrap()).j_max(), 3);
        assert_eq!(DyadicPartition::new(&Lattice::new(10).unwrap()).j_max(), 4);
        assert_eq!(DyadicPartition::new(&Lattice::new(2).unwrap()).j_max(), 2);
    }
}
