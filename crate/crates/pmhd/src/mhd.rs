//! Quadratic MHD nonlinearity in divergence form.
//!
//! Tensors are nine physical sample arrays in row-major order `T[3 * a + b]`.
//! For field pairs `p = (p_u, p_b)`, `q = (q_u, q_b)` the velocity bracket is
//! `p_u^a q_u^b - p_b^a q_b^b` and the magnetic bracket `p_b^a q_u^b - p_u^a q_b^b`;
//! the right-hand side of either equation is `-1/2 P div` of its bracket.

use std::sync::Arc;

use crate::lattice::as_f64;
use crate::spectral::{leray_matrix, SpectralField, TorusGrid, C64};

pub type Tensor = Vec<Vec<f64>>;

pub fn zero_tensor(points: usize) -> Tensor {
    vec![vec![0.0; points]; 9]
}

/// Physical samples of every component.
pub fn samples(f: &SpectralField) -> Vec<Vec<f64>> {
    let comps: Vec<&[C64]> = (0..f.ncomp()).map(|c| f.comp(c)).collect();
    f.grid().synthesize_many(&comps)
}

/// `t[ab] += s p^a q^b`.
pub fn outer_into(t: &mut Tensor, s: f64, p: &[Vec<f64>], q: &[Vec<f64>]) {
    for a in 0..3 {
        for b in 0..3 {
            for ((o, x), y) in t[3 * a + b].iter_mut().zip(&p[a]).zip(&q[b]) {
                *o += s * x * y;
            }
        }
    }
}

/// Adds `s` times both brackets of `(p, q)` into `(tu, tb)`.
pub fn brackets_into(
    tu: &mut Tensor,
    tb: &mut Tensor,
    s: f64,
    pu: &[Vec<f64>],
    pb: &[Vec<f64>],
    qu: &[Vec<f64>],
    qb: &[Vec<f64>],
) {
    outer_into(tu, s, pu, qu);
    outer_into(tu, -s, pb, qb);
    outer_into(tb, s, pb, qu);
    outer_into(tb, -s, pu, qb);
}

/// `M + M^T`.
pub fn symmetrize(m: &Tensor) -> Tensor {
    let mut out = m.clone();
    for a in 0..3 {
        for b in 0..3 {
            for (o, x) in out[3 * a + b].iter_mut().zip(&m[3 * b + a]) {
                *o += x;
            }
        }
    }
    out
}

/// `M^T - M`.
pub fn antisymmetrize(m: &Tensor) -> Tensor {
    let mut out = zero_tensor(m[0].len());
    for a in 0..3 {
        for b in 0..3 {
            for ((o, x), y) in out[3 * a + b].iter_mut().zip(&m[3 * b + a]).zip(&m[3 * a + b]) {
                *o = x - y;
            }
        }
    }
    out
}

pub fn add_into(acc: &mut Tensor, s: f64, t: &Tensor) {
    for (a, b) in acc.iter_mut().zip(t) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += s * y;
        }
    }
}

/// Fourier coefficients of the nine tensor entries.
pub fn tensor_coeffs(grid: &TorusGrid, t: &Tensor) -> Vec<Vec<C64>> {
    let refs: Vec<&[f64]> = t.iter().map(|v| v.as_slice()).collect();
    grid.analyze_many(&refs)
}

/// `-1/2 P^{a a1} d_b T^{a1 b}` from tensor coefficients.
pub fn flux_divergence(grid: &Arc<TorusGrid>, coeffs: &[Vec<C64>]) -> SpectralField {
    let lat = grid.lattice();
    let len = grid.modes();
    let mut out = SpectralField::zeros(grid, 3);
    let mut data = vec![[C64::new(0.0, 0.0); 3]; len];
    for (m, slot) in data.iter_mut().enumerate() {
        let k = as_f64(lat.mode(m));
        let mut v = [C64::new(0.0, 0.0); 3];
        for (a1, va) in v.iter_mut().enumerate() {
            for (b, kb) in k.iter().enumerate() {
                *va += coeffs[3 * a1 + b][m] * C64::new(0.0, *kb);
            }
        }
        let p = leray_matrix(k);
        for a in 0..3 {
            slot[a] = (p[a][0] * v[0] + p[a][1] * v[1] + p[a][2] * v[2]) * -0.5;
        }
    }
    for a in 0..3 {
        for (o, d) in out.comp_mut(a).iter_mut().zip(&data) {
            *o = d[a];
        }
    }
    out
}

/// Divergence form of a physical tensor.
pub fn flux_of(grid: &Arc<TorusGrid>, t: &Tensor) -> SpectralField {
    flux_divergence(grid, &tensor_coeffs(grid, t))
}

/// Full nonlinearity `(N_u, N_b)` of the MHD system at state `(u, b)`.
pub fn mhd_rhs(u: &SpectralField, b: &SpectralField) -> (SpectralField, SpectralField) {
    let grid = u.grid();
    let su = samples(u);
    let sb = samples(b);
    let mut tu = zero_tensor(grid.points());
    let mut tb = zero_tensor(grid.points());
    brackets_into(&mut tu, &mut tb, 1.0, &su, &sb, &su, &sb);
    (flux_of(grid, &tu), flux_of(grid, &tb))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_is_solenoidal() {
        let g = TorusGrid::new(8).unwrap();
        let f = SpectralField::from_fn(&g, 3, |k, c| {
            let s = (k[0] * 3 + k[1] * 5 - k[2] + c as i32) as f64;
            C64::new((s * 0.37).sin(), 0.0) / (1.0 + (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64)
        });
        let mut f = f.project_divergence_free().unwrap();
        f.enforce_reality();
        let (nu, nb) = mhd_rhs(&f, &f.scaled(0.5));
        assert!(nu.divergence_residual() < 1e-12);
        assert!(nb.divergence_residual() < 1e-12);
        assert!(nu.is_mean_zero());
    }
}
