//! Empirical constants of the Besov, paraproduct, commutator, heat and lattice
//! inequalities. Each constant is the largest left/right ratio over a random
//! corpus; a constant is stable when it changes little between two grid sizes.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::besov::{BesovIndex, LpContext};
use crate::error::FieldError;
use crate::noise::{complex_normal, replica_rng};
use crate::operators::{
    commutator, heat, kernel_difference, lattice_convolution, leray_entry_apply, leray_para_commutator_check,
    para_gt, para_lt, para_res, sup_power_gaussian, sup_power_gaussian_exact,
};
use crate::spectral::{SpectralField, TorusGrid, C64};

/// Real mean-zero Gaussian field with `E|f(k)|^2 ~ |k|^{-2 alpha - 3}`, so that
/// its blocks scale like a `C^alpha` function.
pub fn gaussian_field(grid: &Arc<TorusGrid>, alpha: f64, rng: &mut ChaCha20Rng) -> SpectralField {
    let lat = grid.lattice();
    let mut f = SpectralField::zeros(grid, 1);
    for m in lat.half_indices() {
        let z = complex_normal(rng) * lat.k2(m).powf(-(alpha + 1.5) / 2.0);
        f.comp_mut(0)[m] = z;
        f.comp_mut(0)[lat.neg_index(m)] = z.conj();
    }
    f
}

/// `Delta_j` of a point mass at a random position, for a random block `j >= 0`.
pub fn wave_packet(ctx: &LpContext, rng: &mut ChaCha20Rng) -> SpectralField {
    let lat = ctx.grid.lattice();
    let j = rng.random_range(0..=ctx.part.j_max());
    let x0: [f64; 3] = [0, 1, 2].map(|_| std::f64::consts::TAU * rng.random::<f64>());
    let w = ctx.part.weights(j);
    let mut f = SpectralField::zeros(&ctx.grid, 1);
    for (m, v) in f.comp_mut(0).iter_mut().enumerate() {
        let k = lat.mode(m);
        let phase = -(k[0] as f64 * x0[0] + k[1] as f64 * x0[1] + k[2] as f64 * x0[2]);
        *v = C64::from_polar(w[m], phase);
    }
    f
}

/// A single real Fourier pair `e^{i phi} e_k + e^{-i phi} e_{-k}`.
pub fn single_mode(ctx: &LpContext, rng: &mut ChaCha20Rng) -> SpectralField {
    let lat = ctx.grid.lattice();
    let zero = lat.zero_index();
    let m = loop {
        let m = rng.random_range(0..lat.len());
        if m != zero {
            break m;
        }
    };
    let z = C64::from_polar(1.0, std::f64::consts::TAU * rng.random::<f64>());
    let mut f = SpectralField::zeros(&ctx.grid, 1);
    f.comp_mut(0)[m] = z;
    f.comp_mut(0)[lat.neg_index(m)] = z.conj();
    f
}

/// Corpus member: a Gaussian `C^alpha`-type field or a wave packet with equal
/// probability. Single modes are left out; their ratios are heavy-tailed.
pub fn random_field(ctx: &LpContext, alpha: f64, rng: &mut ChaCha20Rng) -> SpectralField {
    if rng.random::<bool>() {
        gaussian_field(&ctx.grid, alpha, rng)
    } else {
        wave_packet(ctx, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    /// `||pi_<(f, g)||_{C^b} <= C ||f||_inf ||g||_{C^b}`
    ParaLowSup,
    /// `||pi_<(f, g)||_{C^{a+b}} <= C ||f||_{C^a} ||g||_{C^b}`, `a < 0`
    ParaLowNegative,
    /// `||pi_>(f, g)||_{C^{a+b}} <= C ||f||_{C^a} ||g||_{C^b}`, `b < 0`
    ParaHigh,
    /// `||pi_0(f, g)||_{C^{a+b}} <= C ||f||_{C^a} ||g||_{C^b}`, `a + b > 0`
    Resonant,
    /// `B^a_{2,2} -> B^{a - 3/2}_{inf,inf}`
    Embedding,
    /// trilinear commutator in `C^{a+b+c}`
    Commutator,
    /// Leray projector against a paraproduct
    LerayParaCommutator,
    /// `t^{d/2} ||P_t f||_{C^{a+d}} <= C ||f||_{C^a}`
    HeatSmoothing,
    /// `||P^{lm} f||_{C^a} <= C ||f||_{C^a}`
    LerayBounded,
    /// heat-Leray kernel difference against `|k1|^eta t^{-(1-eta)/2}`
    KernelDifference,
    /// `sum_{k1 + k2 = k} |k1|^{-2} |k2|^{-2} <= C |k|^{-1}`
    Convolution,
    /// `||S_j f||_inf <= C 2^{-j a} ||f||_{C^a}`, `a < 0`
    LowFrequency,
    /// numeric over analytic `sup_a a^r e^{-a^2}`
    GaussianPower,
}

pub const ALL_INEQUALITIES: [Inequality; 13] = [
    Inequality::ParaLowSup,
    Inequality::ParaLowNegative,
    Inequality::ParaHigh,
    Inequality::Resonant,
    Inequality::Embedding,
    Inequality::Commutator,
    Inequality::LerayParaCommutator,
    Inequality::HeatSmoothing,
    Inequality::LerayBounded,
    Inequality::KernelDifference,
    Inequality::Convolution,
    Inequality::LowFrequency,
    Inequality::GaussianPower,
];

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn sup_norm(f: &SpectralField) -> f64 {
    crate::mhd::samples(f).iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
}

/// Copies the coefficients of `f` onto a grid whose lattice contains its own.
pub fn embed(f: &SpectralField, grid: &Arc<TorusGrid>) -> SpectralField {
    let src = f.grid().lattice();
    let dst = grid.lattice();
    let mut out = SpectralField::zeros(grid, f.ncomp());
    for m in 0..src.len() {
        if let Some(d) = dst.index(src.mode(m)) {
            for c in 0..f.ncomp() {
                out.comp_mut(c)[d] = f.comp(c)[m];
            }
        }
    }
    out
}

/// One left/right ratio of the inequality on a fresh random instance drawn at
/// the resolution of `source` and evaluated at that of `ctx`.
pub fn sample_ratio(ineq: Inequality, source: &LpContext, ctx: &LpContext, rng: &mut ChaCha20Rng) -> Result<f64, FieldError> {
    let grid = &source.grid;
    let h = |f: &SpectralField, a: f64| ctx.holder_norm(f, a);
    let draw = |a: f64, rng: &mut ChaCha20Rng| embed(&random_field(source, a, rng), &ctx.grid);
    Ok(match ineq {
        Inequality::ParaLowSup => {
            let (b, f, g) = (-0.3, draw(0.5, rng), draw(-0.3, rng));
            ratio(h(&para_lt(ctx, &f, &g)?, b), sup_norm(&f) * h(&g, b))
        }
        Inequality::ParaLowNegative => {
            let (a, b) = (-0.2, -0.3);
            let (f, g) = (draw(a, rng), draw(b, rng));
            ratio(h(&para_lt(ctx, &f, &g)?, a + b), h(&f, a) * h(&g, b))
        }
        Inequality::ParaHigh => {
            let (a, b) = (0.4, -0.3);
            let (f, g) = (draw(a, rng), draw(b, rng));
            ratio(h(&para_gt(ctx, &f, &g)?, a + b), h(&f, a) * h(&g, b))
        }
        Inequality::Resonant => {
            let (a, b) = (0.6, -0.3);
            let (f, g) = (draw(a, rng), draw(b, rng));
            ratio(h(&para_res(ctx, &f, &g)?, a + b), h(&f, a) * h(&g, b))
        }
        Inequality::Embedding => {
            let a = 0.2;
            let f = draw(a - 1.5, rng);
            let src = ctx.besov_norm(&f, BesovIndex { alpha: a, p: 2.0, q: 2.0 });
            ratio(ctx.besov_norm(&f, BesovIndex::holder(a - 1.5)), src)
        }
        Inequality::Commutator => {
            let (a, b, c) = (0.4, -0.3, -0.05);
            let f = draw(a, rng);
            let g = draw(b, rng);
            let k = draw(c, rng);
            ratio(h(&commutator(ctx, &f, &g, &k)?, a + b + c), h(&f, a) * h(&g, b) * h(&k, c))
        }
        Inequality::LerayParaCommutator => {
            let (a, b) = (0.4, -0.6);
            let (f, g) = (draw(a, rng), draw(b, rng));
            leray_para_commutator_check(ctx, &f, &g, a, b)?.ratio
        }
        Inequality::HeatSmoothing => {
            let (a, d) = (-0.5, 1.0);
            let f = draw(a, rng);
            let t = 10f64.powf(-3.0 + 2.0 * rng.random::<f64>());
            ratio(t.powf(d / 2.0) * h(&heat(&f, t)?, a + d), h(&f, a))
        }
        Inequality::LerayBounded => {
            let a = -0.5;
            let f = draw(a, rng);
            let (l, m) = (rng.random_range(0..3), rng.random_range(0..3));
            ratio(h(&leray_entry_apply(&f, l, m), a), h(&f, a))
        }
        Inequality::KernelDifference => {
            let km = grid.k_max() as f64;
            let r = km.powf(rng.random::<f64>());
            let mut draw = || loop {
                let k = [0, 1, 2].map(|_| (r * (2.0 * rng.random::<f64>() - 1.0)).round());
                if k != [0.0; 3] {
                    return k;
                }
            };
            let (k1, k2) = (draw(), draw());
            let n2 = (k2[0] * k2[0] + k2[1] * k2[1] + k2[2] * k2[2]).max(1.0);
            let t = 10f64.powf(-2.0 + 3.0 * rng.random::<f64>()) / n2;
            let eta = 0.05 + 0.9 * rng.random::<f64>();
            let (i, j, l) = (rng.random_range(0..3), rng.random_range(0..3), rng.random_range(0..3));
            let n1 = (k1[0] * k1[0] + k1[1] * k1[1] + k1[2] * k1[2]).sqrt();
            ratio(kernel_difference(k1, k2, t, i, j, l), n1.powf(eta) * t.powf(-(1.0 - eta) / 2.0))
        }
        Inequality::Convolution => {
            let km = grid.k_max();
            let k = loop {
                let k = [0, 1, 2].map(|_| rng.random_range(-km..=km));
                if k != [0; 3] {
                    break k;
                }
            };
            let n = crate::lattice::norm2(k).sqrt();
            lattice_convolution(k, 2.0, 2.0, 4 * ctx.grid.k_max()) * n
        }
        Inequality::LowFrequency => {
            let a = -0.55;
            let f = draw(a, rng);
            ctx.low_freq_bound_check(f.comp(0), a, f64::INFINITY).max_ratio()
        }
        Inequality::GaussianPower => {
            let r = rng.random_range(0..=6) as f64;
            sup_power_gaussian(r) / sup_power_gaussian_exact(r)
        }
    })
}

/// Largest ratio over a corpus of `samples` instances drawn at the resolution
/// of `source`; the corpus depends only on `(seed, ineq, source)`.
pub fn fitted_constant(
    ineq: Inequality,
    source: &LpContext,
    ctx: &LpContext,
    samples: usize,
    seed: u64,
) -> Result<f64, FieldError> {
    let mut rng = replica_rng(seed, ineq as u64);
    let mut c: f64 = 0.0;
    for _ in 0..samples {
        c = c.max(sample_ratio(ineq, source, ctx, &mut rng)?);
    }
    Ok(c)
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub inequality: Inequality,
    pub n_small: usize,
    pub n_large: usize,
    pub constant_small: f64,
    pub constant_large: f64,
    /// `constant_large / constant_small`
    pub drift: f64,
}

impl StabilityRow {
    pub const CSV_HEADER: &'static str = "inequality,n_small,n_large,constant_small,constant_large,drift";

    pub fn csv_row(&self) -> String {
        let name = serde_json::to_value(self.inequality).expect("serializes");
        format!(
            "{},{},{},{:.16e},{:.16e},{:.16e}",
            name.as_str().unwrap_or_default(),
            self.n_small,
            self.n_large,
            self.constant_small,
            self.constant_large,
            self.drift
        )
    }

    /// Both constants finite and positive, and within `tol` of each other.
    pub fn stable(&self, tol: f64) -> bool {
        self.constant_small.is_finite()
            && self.constant_small > 0.0
            && self.constant_large.is_finite()
            && (self.drift - 1.0).abs() <= tol
    }
}

pub fn stability_sweep(
    ineqs: &[Inequality],
    n_small: usize,
    n_large: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<StabilityRow>, crate::error::GridError> {
    let small = LpContext::new(&TorusGrid::new(n_small)?);
    let large = LpContext::new(&TorusGrid::new(n_large)?);
    Ok(ineqs
        .iter()
        .map(|&ineq| {
            let cs = fitted_constant(ineq, &small, &small, samples, seed).unwrap_or(f64::NAN);
            let cl = fitted_constant(ineq, &small, &large, samples, seed).unwrap_or(f64::NAN);
            StabilityRow {
                inequality: ineq,
                n_small,
                n_large,
                constant_small: cs,
                constant_large: cl,
                drift: cl / cs,
            }
        })
        .collect())
}
