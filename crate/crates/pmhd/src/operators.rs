//! Leray projection, heat flow, derivatives, Bony paraproducts and the commutator.
//!
//! Paraproducts are formed in physical space from the Littlewood-Paley blocks:
//! `pi_<(f, g) = sum_j (sum_{i <= j-2} Delta_i f) Delta_j g`, `pi_>(f, g) = pi_<(g, f)`
//! and `pi_0(f, g) = sum_{|i-j| <= 1} Delta_i f Delta_j g`, which sum exactly to `fg`.

use crate::besov::LpContext;
use crate::error::FieldError;
use crate::lattice::as_f64;
use crate::spectral::{leray_entry, SpectralField, C64};

/// Leray projection of every 3-component block.
pub fn leray(f: &SpectralField) -> Result<SpectralField, FieldError> {
    f.project_divergence_free()
}

/// The scalar multiplier `P^{lm}` applied componentwise.
pub fn leray_entry_apply(f: &SpectralField, l: usize, m: usize) -> SpectralField {
    let lat = f.grid().lattice();
    f.map_modes(|i| leray_entry(as_f64(lat.mode(i)), l, m))
}

/// Heat semigroup `P_t`, multiplier `exp(-|k|^2 t)`.
pub fn heat(f: &SpectralField, t: f64) -> Result<SpectralField, FieldError> {
    if t < 0.0 {
        return Err(FieldError::NegativeTime(t));
    }
    let lat = f.grid().lattice();
    Ok(f.map_modes(|m| (-lat.k2(m) * t).exp()))
}

/// `partial_{x^axis}` applied componentwise.
pub fn derivative(f: &SpectralField, axis: usize) -> SpectralField {
    let lat = f.grid().lattice();
    let mut out = f.clone();
    for c in 0..f.ncomp() {
        for (m, v) in out.comp_mut(c).iter_mut().enumerate() {
            *v *= C64::new(0.0, lat.mode(m)[axis] as f64);
        }
    }
    out
}

pub fn laplacian(f: &SpectralField) -> SpectralField {
    let lat = f.grid().lattice();
    f.map_modes(|m| -lat.k2(m))
}

/// Physical samples of all blocks of one scalar and their running sums.
pub struct BlockSamples {
    delta: Vec<Vec<f64>>,
    /// `cum[q + 1] = sum_{i <= q} Delta_i`
    cum: Vec<Vec<f64>>,
}

impl BlockSamples {
    pub fn new(ctx: &LpContext, coeffs: &[C64]) -> Self {
        Self::from_blocks(ctx.blocks_physical(coeffs))
    }

    pub fn from_blocks(delta: Vec<Vec<f64>>) -> Self {
        let mut cum: Vec<Vec<f64>> = Vec::with_capacity(delta.len());
        for d in &delta {
            let next = match cum.last() {
                Some(prev) => prev.iter().zip(d).map(|(a, b)| a + b).collect(),
                None => d.clone(),
            };
            cum.push(next);
        }
        Self { delta, cum }
    }

    /// Several scalars at once, sharing transforms two blocks at a time.
    pub fn many(ctx: &LpContext, fields: &[&[C64]]) -> Vec<Self> {
        let nb = ctx.part.count();
        let mut all = Vec::with_capacity(fields.len() * nb);
        for f in fields {
            for q in ctx.part.blocks() {
                all.push(ctx.block_coeffs(f, q));
            }
        }
        let refs: Vec<&[C64]> = all.iter().map(|b| b.as_slice()).collect();
        let mut phys = ctx.grid.synthesize_many(&refs).into_iter();
        (0..fields.len())
            .map(|_| Self::from_blocks((&mut phys).take(nb).collect()))
            .collect()
    }

    pub fn blocks(&self) -> usize {
        self.delta.len()
    }

    pub fn delta(&self, slot: usize) -> &[f64] {
        &self.delta[slot]
    }

    /// Full field samples.
    pub fn total(&self) -> &[f64] {
        self.cum.last().expect("at least one block")
    }
}

fn accumulate(out: &mut [f64], a: &[f64], b: &[f64]) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o += x * y;
    }
}

/// Samples of `pi_<(f, g)`.
pub fn para_lt_samples(f: &BlockSamples, g: &BlockSamples) -> Vec<f64> {
    let mut out = vec![0.0; g.delta[0].len()];
    for slot in 2..g.blocks() {
        accumulate(&mut out, &f.cum[slot - 2], &g.delta[slot]);
    }
    out
}

/// Adds `s * pi_<(f, g)` into `out`.
pub fn para_lt_into(out: &mut [f64], s: f64, f: &BlockSamples, g: &BlockSamples) {
    for slot in 2..g.blocks() {
        for ((o, x), y) in out.iter_mut().zip(&f.cum[slot - 2]).zip(&g.delta[slot]) {
            *o += s * x * y;
        }
    }
}

/// Samples of `pi_0(f, g)`.
pub fn para_res_samples(f: &BlockSamples, g: &BlockSamples) -> Vec<f64> {
    let mut out = vec![0.0; g.delta[0].len()];
    para_res_into(&mut out, 1.0, f, g);
    out
}

pub fn para_res_into(out: &mut [f64], s: f64, f: &BlockSamples, g: &BlockSamples) {
    let nb = g.blocks();
    for i in 0..nb {
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(nb - 1);
        for j in lo..=hi {
            for ((o, x), y) in out.iter_mut().zip(&f.delta[i]).zip(&g.delta[j]) {
                *o += s * x * y;
            }
        }
    }
}

/// Adds `s * f g` into `out`.
pub fn product_into(out: &mut [f64], s: f64, f: &[f64], g: &[f64]) {
    for ((o, x), y) in out.iter_mut().zip(f).zip(g) {
        *o += s * x * y;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Para {
    Low,
    High,
    Resonant,
}

fn para_scalar(ctx: &LpContext, kind: Para, f: &[C64], g: &[C64]) -> Vec<C64> {
    let bs = BlockSamples::many(ctx, &[f, g]);
    let samples = match kind {
        Para::Low => para_lt_samples(&bs[0], &bs[1]),
        Para::High => para_lt_samples(&bs[1], &bs[0]),
        Para::Resonant => para_res_samples(&bs[0], &bs[1]),
    };
    ctx.grid.analyze(&samples)
}

fn para_field(
    ctx: &LpContext,
    kind: Para,
    f: &SpectralField,
    g: &SpectralField,
) -> Result<SpectralField, FieldError> {
    f.same_grid(g)?;
    let comps = match (f.ncomp(), g.ncomp()) {
        (a, b) if a == b => (0..a).map(|c| para_scalar(ctx, kind, f.comp(c), g.comp(c))).collect(),
        (1, b) => (0..b).map(|c| para_scalar(ctx, kind, f.comp(0), g.comp(c))).collect(),
        (a, 1) => (0..a).map(|c| para_scalar(ctx, kind, f.comp(c), g.comp(0))).collect(),
        (a, b) => return Err(FieldError::Arity { expected: a, got: b }),
    };
    Ok(SpectralField::from_components(f.grid(), comps))
}

/// `pi_<(f, g)`: low frequencies of `f` against high frequencies of `g`.
pub fn para_lt(ctx: &LpContext, f: &SpectralField, g: &SpectralField) -> Result<SpectralField, FieldError> {
    para_field(ctx, Para::Low, f, g)
}

pub fn para_gt(ctx: &LpContext, f: &SpectralField, g: &SpectralField) -> Result<SpectralField, FieldError> {
    para_field(ctx, Para::High, f, g)
}

pub fn para_res(ctx: &LpContext, f: &SpectralField, g: &SpectralField) -> Result<SpectralField, FieldError> {
    para_field(ctx, Para::Resonant, f, g)
}

/// `C(f, g, h) = pi_0(pi_<(f, g), h) - f pi_0(g, h)` for scalars.
pub fn commutator(
    ctx: &LpContext,
    f: &SpectralField,
    g: &SpectralField,
    h: &SpectralField,
) -> Result<SpectralField, FieldError> {
    let lt = para_lt(ctx, f, g)?;
    let first = para_res(ctx, &lt, h)?;
    let res = para_res(ctx, g, h)?;
    let second = crate::spectral::pointwise_product(f, &res)?;
    first.sub(&second)
}

/// `P^{lm} pi_<(f, g) - pi_<(f, P^{lm} g)`.
pub fn leray_para_commutator(
    ctx: &LpContext,
    f: &SpectralField,
    g: &SpectralField,
    l: usize,
    m: usize,
) -> Result<SpectralField, FieldError> {
    let a = leray_entry_apply(&para_lt(ctx, f, g)?, l, m);
    let b = para_lt(ctx, f, &leray_entry_apply(g, l, m))?;
    a.sub(&b)
}

/// Fitted constant of the Leray/paraproduct commutator over all index pairs.
#[derive(Debug, Clone)]
pub struct CommutatorReport {
    pub ratio: f64,
    pub norm: f64,
}

pub fn leray_para_commutator_check(
    ctx: &LpContext,
    f: &SpectralField,
    g: &SpectralField,
    alpha: f64,
    beta: f64,
) -> Result<CommutatorReport, FieldError> {
    let mut norm: f64 = 0.0;
    for l in 0..3 {
        for m in 0..3 {
            let d = leray_para_commutator(ctx, f, g, l, m)?;
            norm = norm.max(ctx.holder_norm(&d, alpha + beta));
        }
    }
    let denom = ctx.holder_norm(f, alpha) * ctx.holder_norm(g, beta);
    let ratio = if denom > 0.0 { norm / denom } else { 0.0 };
    Ok(CommutatorReport { ratio, norm })
}

/// Left side of the heat-kernel difference bound:
/// `|e^{-|k1+k2|^2 t} (k1+k2)^i P^{jl}(k1+k2) - e^{-|k2|^2 t} k2^i P^{jl}(k2)|`.
pub fn kernel_difference(k1: [f64; 3], k2: [f64; 3], t: f64, i: usize, j: usize, l: usize) -> f64 {
    let k12 = [k1[0] + k2[0], k1[1] + k2[1], k1[2] + k2[2]];
    let n2 = |k: [f64; 3]| k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    let a = (-n2(k12) * t).exp() * k12[i] * leray_entry(k12, j, l);
    let b = (-n2(k2) * t).exp() * k2[i] * leray_entry(k2, j, l);
    (a - b).abs()
}

/// `sum_{k1 + k2 = k, k1, k2 != 0, |k1|_inf <= radius} |k1|^{-l} |k2|^{-m}`.
pub fn lattice_convolution(k: [i32; 3], l: f64, m: f64, radius: i32) -> f64 {
    let mut s = 0.0;
    for a in -radius..=radius {
        for b in -radius..=radius {
            for c in -radius..=radius {
                let k1 = [a, b, c];
                let k2 = [k[0] - a, k[1] - b, k[2] - c];
                if k1 == [0, 0, 0] || k2 == [0, 0, 0] {
                    continue;
                }
                let n1 = crate::lattice::norm2(k1).sqrt();
                let n2 = crate::lattice::norm2(k2).sqrt();
                s += n1.powf(-l) * n2.powf(-m);
            }
        }
    }
    s
}

/// `sup_{a >= 0} a^r e^{-a^2}` by golden-section search.
pub fn sup_power_gaussian(r: f64) -> f64 {
    let g = |a: f64| a.powf(r) * (-a * a).exp();
    if r == 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 10.0f64);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = hi - phi * (hi - lo);
        let x2 = lo + phi * (hi - lo);
        if g(x1) < g(x2) {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    g(0.5 * (lo + hi))
}

/// Closed form `(r/2)^{r/2} e^{-r/2}`.
pub fn sup_power_gaussian_exact(r: f64) -> f64 {
    if r == 0.0 {
        1.0
    } else {
        (r / 2.0).powf(r / 2.0) * (-r / 2.0).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::TorusGrid;

    #[test]
    fn leray_example_entries() {
        let k = [1.0, 1.0, 0.0];
        assert!((leray_entry(k, 0, 0) - 0.5).abs() < 1e-15);
        assert!((leray_entry(k, 0, 1) + 0.5).abs() < 1e-15);
        assert!((leray_entry(k, 2, 2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn heat_rejects_negative_time() {
        let g = TorusGrid::new(8).unwrap();
        let f = SpectralField::zeros(&g, 1);
        assert!(heat(&f, -1.0).is_err());
    }

    #[test]
    fn gaussian_power_optimum() {
        for r in 0..=6 {
            let r = r as f64;
            assert!((sup_power_gaussian(r) - sup_power_gaussian_exact(r)).abs() < 1e-10);
        }
    }
}
