//! Truncated Fourier fields on the 3-torus.
//!
//! Basis `e_k(x) = (2 pi)^{-3/2} exp(i k.x)`. A field with coefficients `c_k` has
//! physical values `(2 pi)^{-3/2} sum_k c_k exp(i k.x)` on the uniform grid
//! `x_j = 2 pi j / n`, so the L^2 norm over the torus equals the l^2 norm of
//! the coefficients.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{FieldError, GridError};
use crate::lattice::{as_f64, Lattice};

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// `(2 pi)^{-3/2}`
pub fn basis_norm() -> f64 {
    (2.0 * PI).powf(-1.5)
}

struct Fft3 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl Fft3 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Self { n, fwd, inv, scratch_len }
    }

    /// In-place unnormalized 3-D transform. `keep[j]` marks wavenumber slots that
    /// may be nonzero on the spectral side; lines that only touch dropped slots
    /// are skipped.
    fn run(&self, buf: &mut [C64], inverse: bool, keep: &[bool]) {
        let n = self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        let mut scratch = vec![ZERO; self.scratch_len];
        let mut plane = vec![ZERO; n * n];
        let axis2 = |buf: &mut [C64], scratch: &mut [C64]| {
            for x0 in 0..n {
                if !keep[x0] {
                    continue;
                }
                for x1 in 0..n {
                    if !keep[x1] {
                        continue;
                    }
                    let off = (x0 * n + x1) * n;
                    plan.process_with_scratch(&mut buf[off..off + n], scratch);
                }
            }
        };
        let axis1 = |buf: &mut [C64], scratch: &mut [C64], plane: &mut [C64]| {
            for x0 in 0..n {
                if !keep[x0] {
                    continue;
                }
                let base = x0 * n * n;
                for x1 in 0..n {
                    for x2 in 0..n {
                        plane[x2 * n + x1] = buf[base + x1 * n + x2];
                    }
                }
                plan.process_with_scratch(plane, scratch);
                for x1 in 0..n {
                    for x2 in 0..n {
                        buf[base + x1 * n + x2] = plane[x2 * n + x1];
                    }
                }
            }
        };
        let axis0 = |buf: &mut [C64], scratch: &mut [C64], plane: &mut [C64]| {
            for x1 in 0..n {
                for x0 in 0..n {
                    for x2 in 0..n {
                        plane[x2 * n + x0] = buf[(x0 * n + x1) * n + x2];
                    }
                }
                plan.process_with_scratch(plane, scratch);
                for x0 in 0..n {
                    for x2 in 0..n {
                        buf[(x0 * n + x1) * n + x2] = plane[x2 * n + x0];
                    }
                }
            }
        };
        if inverse {
            axis2(buf, &mut scratch);
            axis1(buf, &mut scratch, &mut plane);
            axis0(buf, &mut scratch, &mut plane);
        } else {
            axis0(buf, &mut scratch, &mut plane);
            axis1(buf, &mut scratch, &mut plane);
            axis2(buf, &mut scratch);
        }
    }
}

/// Collocation grid with `n` points per axis and its alias-free mode lattice.
pub struct TorusGrid {
    n: usize,
    dealias_fraction: f64,
    lattice: Lattice,
    positions: Vec<usize>,
    keep: Vec<bool>,
    fft: Fft3,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("n", &self.n)
            .field("k_max", &self.k_max())
            .field("dealias_fraction", &self.dealias_fraction)
            .finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.k_max() == other.k_max()
            && self.dealias_fraction == other.dealias_fraction
    }
}

/// Largest truncation radius for which products of retained modes do not alias
/// back onto retained modes (`3 k_max < n`), capped by the dealias fraction.
pub fn alias_free_k_max(n: usize, fraction: f64) -> i32 {
    let mut k = (n as f64 * fraction / 2.0 + 1e-12).floor() as i32;
    while k > 0 && 3 * k >= n as i32 {
        k -= 1;
    }
    k
}

impl TorusGrid {
    pub fn new(n: usize) -> Result<Arc<Self>, GridError> {
        Self::with_fraction(n, 2.0 / 3.0)
    }

    pub fn with_fraction(n: usize, dealias_fraction: f64) -> Result<Arc<Self>, GridError> {
        if n < 4 || n % 2 != 0 {
            return Err(GridError::BadSize(n));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(GridError::BadFraction(dealias_fraction));
        }
        let k_max = alias_free_k_max(n, dealias_fraction);
        if k_max < 1 {
            return Err(GridError::EmptyLattice { n, fraction: dealias_fraction });
        }
        let lattice = Lattice::new(k_max)?;
        let wrap = |c: i32| c.rem_euclid(n as i32) as usize;
        let positions = lattice
            .modes()
            .iter()
            .map(|k| (wrap(k[0]) * n + wrap(k[1])) * n + wrap(k[2]))
            .collect();
        let keep = (0..n)
            .map(|j| j as i32 <= k_max || j as i32 >= n as i32 - k_max)
            .collect();
        Ok(Arc::new(Self {
            n,
            dealias_fraction,
            lattice,
            positions,
            keep,
            fft: Fft3::new(n),
        }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn k_max(&self) -> i32 {
        self.lattice.k_max()
    }

    pub fn dealias_fraction(&self) -> f64 {
        self.dealias_fraction
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn modes(&self) -> usize {
        self.lattice.len()
    }

    /// Quadrature weight of one collocation point, `(2 pi / n)^3`.
    pub fn cell_volume(&self) -> f64 {
        (2.0 * PI / self.n as f64).powi(3)
    }

    /// Physical samples of the complex combination `a + i b` of two real fields.
    fn inverse_packed(&self, a: &[C64], b: Option<&[C64]>) -> Vec<C64> {
        let mut buf = vec![ZERO; self.points()];
        match b {
            Some(b) => {
                for ((p, x), y) in self.positions.iter().zip(a).zip(b) {
                    buf[*p] = x + C64::i() * y;
                }
            }
            None => {
                for (p, x) in self.positions.iter().zip(a) {
                    buf[*p] = *x;
                }
            }
        }
        self.fft.run(&mut buf, true, &self.keep);
        let s = basis_norm();
        for v in buf.iter_mut() {
            *v *= s;
        }
        buf
    }

    /// Complex physical samples (imaginary part nonzero only for non-real input).
    pub fn synthesize_complex(&self, coeffs: &[C64]) -> Vec<C64> {
        self.inverse_packed(coeffs, None)
    }

    /// Real physical samples of a reality-symmetric scalar.
    pub fn synthesize(&self, coeffs: &[C64]) -> Vec<f64> {
        self.inverse_packed(coeffs, None).into_iter().map(|v| v.re).collect()
    }

    /// Two real scalars with one complex transform.
    pub fn synthesize_pair(&self, a: &[C64], b: &[C64]) -> (Vec<f64>, Vec<f64>) {
        let buf = self.inverse_packed(a, Some(b));
        (buf.iter().map(|v| v.re).collect(), buf.iter().map(|v| v.im).collect())
    }

    /// Many real scalars, paired internally.
    pub fn synthesize_many(&self, fields: &[&[C64]]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(fields.len());
        let mut it = fields.chunks(2);
        for chunk in &mut it {
            if chunk.len() == 2 {
                let (a, b) = self.synthesize_pair(chunk[0], chunk[1]);
                out.push(a);
                out.push(b);
            } else {
                out.push(self.synthesize(chunk[0]));
            }
        }
        out
    }

    fn forward_packed(&self, buf: &mut [C64]) {
        self.fft.run(buf, false, &self.keep);
        let s = (2.0 * PI).powf(1.5) / self.points() as f64;
        for p in self.positions.iter() {
            buf[*p] *= s;
        }
    }

    /// Retained Fourier coefficients of real samples.
    pub fn analyze(&self, phys: &[f64]) -> Vec<C64> {
        let mut buf: Vec<C64> = phys.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.forward_packed(&mut buf);
        self.positions.iter().map(|&p| buf[p]).collect()
    }

    /// Retained Fourier coefficients of complex samples.
    pub fn analyze_complex(&self, phys: &[C64]) -> Vec<C64> {
        let mut buf = phys.to_vec();
        self.forward_packed(&mut buf);
        self.positions.iter().map(|&p| buf[p]).collect()
    }

    /// Two real sample arrays with one complex transform.
    pub fn analyze_pair(&self, f: &[f64], g: &[f64]) -> (Vec<C64>, Vec<C64>) {
        let mut buf: Vec<C64> = f.iter().zip(g).map(|(&a, &b)| C64::new(a, b)).collect();
        self.forward_packed(&mut buf);
        let len = self.modes();
        let mut a = vec![ZERO; len];
        let mut b = vec![ZERO; len];
        for m in 0..len {
            let h = buf[self.positions[m]];
            let hm = buf[self.positions[len - 1 - m]].conj();
            a[m] = (h + hm) * 0.5;
            b[m] = (h - hm) * C64::new(0.0, -0.5);
        }
        (a, b)
    }

    pub fn analyze_many(&self, fields: &[&[f64]]) -> Vec<Vec<C64>> {
        let mut out = Vec::with_capacity(fields.len());
        for chunk in fields.chunks(2) {
            if chunk.len() == 2 {
                let (a, b) = self.analyze_pair(chunk[0], chunk[1]);
                out.push(a);
                out.push(b);
            } else {
                out.push(self.analyze(chunk[0]));
            }
        }
        out
    }

    /// Dealiased product of two real scalars given by coefficients.
    pub fn product(&self, a: &[C64], b: &[C64]) -> Vec<C64> {
        let (pa, pb) = self.synthesize_pair(a, b);
        let prod: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        self.analyze(&prod)
    }
}

/// Leray multiplier entry `delta(l-m) - k_l k_m / |k|^2`; identity at `k = 0`.
pub fn leray_entry(k: [f64; 3], l: usize, m: usize) -> f64 {
    let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    let d = if l == m { 1.0 } else { 0.0 };
    if k2 == 0.0 {
        d
    } else {
        d - k[l] * k[m] / k2
    }
}

pub fn leray_matrix(k: [f64; 3]) -> [[f64; 3]; 3] {
    let mut p = [[0.0; 3]; 3];
    for (l, row) in p.iter_mut().enumerate() {
        for (m, e) in row.iter_mut().enumerate() {
            *e = leray_entry(k, l, m);
        }
    }
    p
}

/// Real samples of an `ncomp`-component field, component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalField {
    pub n: usize,
    pub ncomp: usize,
    pub data: Vec<f64>,
}

impl PhysicalField {
    pub fn comp(&self, c: usize) -> &[f64] {
        let p = self.n * self.n * self.n;
        &self.data[c * p..(c + 1) * p]
    }
}

/// Fourier coefficients of an `ncomp`-component real field, stored
/// `[component][mode]` over the grid's full lattice.
#[derive(Clone)]
pub struct SpectralField {
    grid: Arc<TorusGrid>,
    ncomp: usize,
    data: Vec<C64>,
}

impl fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralField")
            .field("grid", &self.grid)
            .field("ncomp", &self.ncomp)
            .finish()
    }
}

impl SpectralField {
    pub fn zeros(grid: &Arc<TorusGrid>, ncomp: usize) -> Self {
        Self { grid: grid.clone(), ncomp, data: vec![ZERO; ncomp * grid.modes()] }
    }

    pub fn from_components(grid: &Arc<TorusGrid>, comps: Vec<Vec<C64>>) -> Self {
        let ncomp = comps.len();
        let mut data = Vec::with_capacity(ncomp * grid.modes());
        for c in comps {
            assert_eq!(c.len(), grid.modes(), "component length must match lattice");
            data.extend(c);
        }
        Self { grid: grid.clone(), ncomp, data }
    }

    /// Builds a field from `f(mode, component)`.
    pub fn from_fn(
        grid: &Arc<TorusGrid>,
        ncomp: usize,
        mut f: impl FnMut([i32; 3], usize) -> C64,
    ) -> Self {
        let mut out = Self::zeros(grid, ncomp);
        let len = grid.modes();
        for c in 0..ncomp {
            for m in 0..len {
                out.data[c * len + m] = f(grid.lattice().mode(m), c);
            }
        }
        out
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn comp(&self, c: usize) -> &[C64] {
        let len = self.grid.modes();
        &self.data[c * len..(c + 1) * len]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [C64] {
        let len = self.grid.modes();
        &mut self.data[c * len..(c + 1) * len]
    }

    pub fn components(&self) -> Vec<Vec<C64>> {
        (0..self.ncomp).map(|c| self.comp(c).to_vec()).collect()
    }

    /// Sub-field made of components `start..start + count`.
    pub fn slice(&self, start: usize, count: usize) -> Self {
        let len = self.grid.modes();
        Self {
            grid: self.grid.clone(),
            ncomp: count,
            data: self.data[start * len..(start + count) * len].to_vec(),
        }
    }

    pub fn concat(a: &Self, b: &Self) -> Result<Self, FieldError> {
        a.same_grid(b)?;
        let mut data = a.data.clone();
        data.extend_from_slice(&b.data);
        Ok(Self { grid: a.grid.clone(), ncomp: a.ncomp + b.ncomp, data })
    }

    pub fn coeff(&self, c: usize, k: [i32; 3]) -> Option<C64> {
        self.grid.lattice().index(k).map(|m| self.comp(c)[m])
    }

    pub fn same_grid(&self, other: &Self) -> Result<(), FieldError> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(FieldError::GridMismatch)
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<(), FieldError> {
        self.same_grid(other)?;
        if self.ncomp != other.ncomp {
            return Err(FieldError::Arity { expected: self.ncomp, got: other.ncomp });
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self, FieldError> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FieldError> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a -= b);
        Ok(out)
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Self) -> Result<(), FieldError> {
        self.check_compatible(other)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b * s);
        Ok(())
    }

    /// Coefficient l^2 norm, equal to the physical L^2 norm.
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest `|c(-k) - conj c(k)|` over modes and components.
    pub fn reality_defect(&self) -> f64 {
        let lat = self.grid.lattice();
        let mut worst: f64 = 0.0;
        for c in 0..self.ncomp {
            let v = self.comp(c);
            for m in 0..v.len() {
                worst = worst.max((v[lat.neg_index(m)] - v[m].conj()).norm());
            }
        }
        worst
    }

    /// Replaces `c(k)` by the Hermitian average so the reality invariant holds.
    pub fn enforce_reality(&mut self) {
        let len = self.grid.modes();
        for c in 0..self.ncomp {
            let v = &mut self.data[c * len..(c + 1) * len];
            for m in len / 2..len {
                let mn = len - 1 - m;
                let avg = (v[m] + v[mn].conj()) * 0.5;
                v[m] = avg;
                v[mn] = avg.conj();
            }
        }
    }

    pub fn is_mean_zero(&self) -> bool {
        let z = self.grid.lattice().zero_index();
        (0..self.ncomp).all(|c| self.comp(c)[z] == ZERO)
    }

    pub fn project_mean_zero(&self) -> Self {
        let mut out = self.clone();
        let z = self.grid.lattice().zero_index();
        for c in 0..self.ncomp {
            out.comp_mut(c)[z] = ZERO;
        }
        out
    }

    /// Largest `|sum_l k_l c_l(k)|` per 3-component block.
    pub fn divergence_residual(&self) -> f64 {
        let lat = self.grid.lattice();
        let mut worst: f64 = 0.0;
        for block in 0..self.ncomp / 3 {
            for m in 0..lat.len() {
                let k = as_f64(lat.mode(m));
                let d: C64 = (0..3).map(|l| self.comp(3 * block + l)[m] * k[l]).sum();
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    /// Applies the Leray projector to every 3-component block.
    pub fn project_divergence_free(&self) -> Result<Self, FieldError> {
        if self.ncomp == 0 || self.ncomp % 3 != 0 {
            return Err(FieldError::Arity { expected: 3, got: self.ncomp });
        }
        let lat = self.grid.lattice();
        let mut out = self.clone();
        for block in 0..self.ncomp / 3 {
            for m in 0..lat.len() {
                let k = lat.mode(m);
                if k == [0, 0, 0] {
                    continue;
                }
                let kf = as_f64(k);
                let k2 = lat.k2(m);
                let dot: C64 = (0..3).map(|l| self.comp(3 * block + l)[m] * kf[l]).sum();
                for l in 0..3 {
                    let v = self.comp(3 * block + l)[m] - dot * (kf[l] / k2);
                    out.comp_mut(3 * block + l)[m] = v;
                }
            }
        }
        Ok(out)
    }

    /// Real collocation samples; rejects inputs whose synthesis is not real.
    pub fn to_physical(&self) -> Result<PhysicalField, FieldError> {
        let p = self.grid.points();
        let mut data = Vec::with_capacity(self.ncomp * p);
        for c in 0..self.ncomp {
            let z = self.grid.synthesize_complex(self.comp(c));
            let scale = z.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let imag = z.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
            if imag > 1e-12 * scale.max(f64::MIN_POSITIVE) && imag > 1e-300 {
                return Err(FieldError::NotReal { imag, scale });
            }
            data.extend(z.iter().map(|v| v.re));
        }
        Ok(PhysicalField { n: self.grid.n(), ncomp: self.ncomp, data })
    }

    /// Retained coefficients of real samples on this grid.
    pub fn from_physical(grid: &Arc<TorusGrid>, phys: &PhysicalField) -> Result<Self, FieldError> {
        if phys.n != grid.n() {
            return Err(FieldError::GridMismatch);
        }
        let comps = (0..phys.ncomp).map(|c| grid.analyze(phys.comp(c))).collect();
        Ok(Self::from_components(grid, comps))
    }

    /// Multiplies every coefficient by a real per-mode multiplier.
    pub fn map_modes(&self, mut mult: impl FnMut(usize) -> f64) -> Self {
        let len = self.grid.modes();
        let table: Vec<f64> = (0..len).map(&mut mult).collect();
        let mut out = self.clone();
        for c in 0..self.ncomp {
            for (v, t) in out.comp_mut(c).iter_mut().zip(&table) {
                *v *= t;
            }
        }
        out
    }
}

/// Dealiased pointwise product: scalar x scalar, scalar x vector or vector x scalar.
pub fn pointwise_product(f: &SpectralField, g: &SpectralField) -> Result<SpectralField, FieldError> {
    f.same_grid(g)?;
    let grid = f.grid();
    let (s, v) = match (f.ncomp(), g.ncomp()) {
        (1, _) => (f, g),
        (_, 1) => (g, f),
        (a, _) => return Err(FieldError::Arity { expected: 1, got: a }),
    };
    let ps = grid.synthesize(s.comp(0));
    let comps = (0..v.ncomp())
        .map(|c| {
            let pv = grid.synthesize(v.comp(c));
            let prod: Vec<f64> = ps.iter().zip(&pv).map(|(a, b)| a * b).collect();
            grid.analyze(&prod)
        })
        .collect();
    Ok(SpectralField::from_components(grid, comps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_max_rule() {
        assert_eq!(TorusGrid::new(8).unwrap().k_max(), 2);
        assert_eq!(TorusGrid::new(16).unwrap().k_max(), 5);
        assert_eq!(TorusGrid::new(32).unwrap().k_max(), 10);
        assert_eq!(alias_free_k_max(16, 1.0), 5);
        assert!(TorusGrid::new(7).is_err());
        assert!(TorusGrid::new(2).is_err());
    }

    #[test]
    fn cosine_mode() {
        let g = TorusGrid::new(8).unwrap();
        let f = SpectralField::from_fn(&g, 1, |k, _| {
            if k == [1, 0, 0] || k == [-1, 0, 0] {
                C64::new(1.0, 0.0)
            } else {
                ZERO
            }
        });
        let p = f.to_physical().unwrap();
        let n = 8;
        for x0 in 0..n {
            let want = 2.0 * basis_norm() * (2.0 * PI * x0 as f64 / n as f64).cos();
            for r in 0..n * n {
                assert!((p.data[x0 * n * n + r] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn non_real_rejected() {
        let g = TorusGrid::new(8).unwrap();
        let f = SpectralField::from_fn(&g, 1, |k, _| {
            if k == [1, 0, 0] {
                C64::new(1.0, 0.0)
            } else {
                ZERO
            }
        });
        assert!(matches!(f.to_physical(), Err(FieldError::NotReal { .. })));
    }
}
