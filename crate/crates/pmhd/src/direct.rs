//! Direct pseudo-spectral solver for the Leray-projected mollified MHD system
//! (viscosity and resistivity 1) and the energy identities of its nonlinearity.

use std::sync::Arc;

use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::SolverError;
use crate::mhd::{mhd_rhs, samples};
use crate::noise::{replica_rng, sample_white_noise_increment, CorrelationMode, GaussianDriverPath, MollifierCutoff};
use crate::operators::derivative;
use crate::renorm::heat_integral;
use crate::spectral::{SpectralField, TorusGrid, C64};
use crate::tree::{check_time_grid, exp_euler_step, Path};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepperConfig {
    /// Stability constant `c` in `dt <= c / k_max^2`.
    pub cfl: f64,
    /// 1: exponential Euler, 2: exponential midpoint-type predictor-corrector.
    pub order: u8,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self { cfl: 0.25, order: 1 }
    }
}

pub fn stability_bound(grid: &TorusGrid, c: f64) -> f64 {
    let k = grid.k_max() as f64;
    c / (k * k)
}

pub fn check_cfl(grid: &TorusGrid, dt: f64, c: f64) -> Result<(), SolverError> {
    let bound = stability_bound(grid, c);
    if dt > bound * (1.0 + 1e-12) {
        return Err(SolverError::Cfl { dt, bound });
    }
    Ok(())
}

/// Source of stochastic forcing.
pub enum Forcing<'a> {
    None,
    /// Increments `X(t_{m+1}) - e^{-|k|^2 h} X(t_m)` of a sampled driver path.
    Path(&'a GaussianDriverPath),
    /// Euler-Maruyama white-noise increments drawn on the fly.
    WhiteNoise { cutoff: MollifierCutoff, mode: CorrelationMode, rng: Box<ChaCha20Rng> },
}

impl<'a> Forcing<'a> {
    pub fn white_noise(cutoff: MollifierCutoff, mode: CorrelationMode, seed: u64, replica: u64) -> Self {
        Forcing::WhiteNoise { cutoff, mode, rng: Box::new(replica_rng(seed, replica)) }
    }
}

/// `h phi_2(-|k|^2 h)` weights, `int_0^h e^{-a(h-s)} s/h ds`.
fn phi2_weight(a: f64, h: f64) -> f64 {
    if a * h < 1e-6 {
        h * (0.5 - a * h / 6.0)
    } else {
        (h - heat_integral(a, h)) / (a * h)
    }
}

/// One deterministic step of the chosen order.
pub fn step(u: &SpectralField, b: &SpectralField, dt: f64, cfg: &StepperConfig) -> (SpectralField, SpectralField) {
    let (nu, nb) = mhd_rhs(u, b);
    let u1 = exp_euler_step(u, &nu, dt);
    let b1 = exp_euler_step(b, &nb, dt);
    if cfg.order < 2 {
        return (u1, b1);
    }
    let (mu, mb) = mhd_rhs(&u1, &b1);
    let lat = u.grid().lattice();
    let w: Vec<f64> = (0..lat.len()).map(|m| phi2_weight(lat.k2(m), dt)).collect();
    let correct = |base: &SpectralField, new: &SpectralField, old: &SpectralField| {
        let mut out = base.clone();
        for c in 0..3 {
            for (m, v) in out.comp_mut(c).iter_mut().enumerate() {
                *v += (new.comp(c)[m] - old.comp(c)[m]) * w[m];
            }
        }
        out
    };
    (correct(&u1, &mu, &nu), correct(&b1, &mb, &nb))
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub u: Path,
    pub b: Path,
}

/// Integrates from `P y0` on `times`.
pub fn solve(
    u0: &SpectralField,
    b0: &SpectralField,
    times: &[f64],
    forcing: &mut Forcing,
    cfg: &StepperConfig,
) -> Result<Trajectory, SolverError> {
    check_time_grid(times)?;
    let grid = u0.grid().clone();
    for w in times.windows(2) {
        check_cfl(&grid, w[1] - w[0], cfg.cfl)?;
    }
    if let Forcing::Path(p) = forcing {
        if p.times.len() < times.len() || p.times.iter().zip(times).any(|(a, b)| (a - b).abs() > 1e-14) {
            return Err(SolverError::BadTimeGrid);
        }
    }
    let mut u = vec![u0.project_divergence_free()?.project_mean_zero()];
    let mut b = vec![b0.project_divergence_free()?.project_mean_zero()];
    for m in 0..times.len() - 1 {
        let h = times[m + 1] - times[m];
        let (mut un, mut bn) = step(&u[m], &b[m], h, cfg);
        match forcing {
            Forcing::None => {}
            Forcing::Path(p) => {
                let (iu, ib) = p.increment(m);
                un.axpy(1.0, &iu)?;
                bn.axpy(1.0, &ib)?;
            }
            Forcing::WhiteNoise { cutoff, mode, rng } => {
                let (wu, wb) = sample_white_noise_increment(&grid, *cutoff, h, rng, *mode)
                    .map_err(|_| SolverError::BadTimeGrid)?;
                let lat = grid.lattice();
                let push = |f: &SpectralField| {
                    f.project_divergence_free()
                        .map(|g| g.project_mean_zero().map_modes(|m| (-lat.k2(m) * h).exp()))
                };
                un.axpy(1.0, &push(&wu)?)?;
                bn.axpy(1.0, &push(&wb)?)?;
            }
        }
        u.push(un);
        b.push(bn);
    }
    Ok(Trajectory { times: times.to_vec(), u, b })
}

/// `sum_k f(k) conj g(k)` over all components, the `L^2` pairing of real fields.
fn pairing(f: &SpectralField, g: &SpectralField) -> f64 {
    f.data().iter().zip(g.data()).map(|(a, b)| (a * b.conj()).re).sum()
}

/// `(v . grad) w` as a dealiased vector field.
pub fn advect(v: &SpectralField, w: &SpectralField) -> SpectralField {
    let grid = v.grid();
    let sv = samples(v);
    let comps = (0..3)
        .map(|i| {
            let wi = w.slice(i, 1);
            let mut acc = vec![0.0; grid.points()];
            for (j, vj) in sv.iter().enumerate() {
                let d = grid.synthesize(derivative(&wi, j).comp(0));
                for ((o, x), y) in acc.iter_mut().zip(vj).zip(&d) {
                    *o += x * y;
                }
            }
            grid.analyze(&acc)
        })
        .collect();
    SpectralField::from_components(grid, comps)
}

fn sup(f: &SpectralField) -> f64 {
    samples(f).iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
}

fn grad_l2(f: &SpectralField) -> f64 {
    let lat = f.grid().lattice();
    f.map_modes(|m| lat.k2(m).sqrt()).l2_norm()
}

/// Integrals of the nonlinearity against the fields, each with a Hoelder-type
/// scale `||a||_inf ||grad b||_2 ||c||_2` bounding its magnitude.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyIdentities {
    /// `int (u . grad) u . u`
    pub self_advection: f64,
    /// `int (b . grad) b . u`
    pub lorentz_work: f64,
    /// `int (b . grad) b . u + (b . grad) u . b`
    pub cross_sum: f64,
    /// `int [(u . grad) u - (b . grad) b] . Lap u + [(u . grad) b - (b . grad) u] . Lap b`
    pub laplacian_sum: f64,
    pub self_advection_scale: f64,
    pub lorentz_scale: f64,
    pub cross_scale: f64,
    pub laplacian_scale: f64,
}

pub fn energy_identities(u: &SpectralField, b: &SpectralField) -> EnergyIdentities {
    let lat = u.grid().lattice();
    let lap = |f: &SpectralField| f.map_modes(|m| -lat.k2(m));
    let uu = advect(u, u);
    let bb = advect(b, b);
    let bu = advect(b, u);
    let ub = advect(u, b);
    let (su, sb) = (sup(u), sup(b));
    let (gu, gb) = (grad_l2(u), grad_l2(b));
    let (lu, lb) = (u.l2_norm(), b.l2_norm());
    let (du, db) = (lap(u), lap(b));
    let lorentz = pairing(&bb, u);
    EnergyIdentities {
        self_advection: pairing(&uu, u),
        lorentz_work: lorentz,
        cross_sum: lorentz + pairing(&bu, b),
        laplacian_sum: pairing(&uu.sub(&bb).expect("same grid"), &du)
            + pairing(&ub.sub(&bu).expect("same grid"), &db),
        self_advection_scale: su * gu * lu,
        lorentz_scale: sb * gb * lu,
        cross_scale: sb * gb * lu + sb * gu * lb,
        laplacian_scale: (su * gu + sb * gb) * du.l2_norm() + (su * gb + sb * gu) * db.l2_norm(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyRow {
    pub t: f64,
    pub kinetic: f64,
    pub magnetic: f64,
    pub self_advection: f64,
    pub cross_sum: f64,
    pub lorentz_work: f64,
    pub laplacian_sum: f64,
}

impl EnergyRow {
    pub const CSV_HEADER: &'static str = "t,kinetic,magnetic,self_advection,cross_sum,lorentz_work,laplacian_sum";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.t, self.kinetic, self.magnetic, self.self_advection, self.cross_sum, self.lorentz_work, self.laplacian_sum
        )
    }
}

pub fn energy_rows(traj: &Trajectory) -> Vec<EnergyRow> {
    traj.times
        .iter()
        .zip(traj.u.iter().zip(&traj.b))
        .map(|(t, (u, b))| {
            let e = energy_identities(u, b);
            EnergyRow {
                t: *t,
                kinetic: 0.5 * u.l2_norm().powi(2),
                magnetic: 0.5 * b.l2_norm().powi(2),
                self_advection: e.self_advection,
                cross_sum: e.cross_sum,
                lorentz_work: e.lorentz_work,
                laplacian_sum: e.laplacian_sum,
            }
        })
        .collect()
}

/// Random real divergence-free mean-zero field with spectrum `~ |k|^{-decay}`.
pub fn random_solenoidal(grid: &Arc<TorusGrid>, seed: u64, decay: f64) -> SpectralField {
    use crate::noise::complex_normal;
    let mut rng = replica_rng(seed, 0);
    let lat = grid.lattice();
    let mut f = SpectralField::zeros(grid, 3);
    for m in lat.half_indices() {
        let amp = lat.k2(m).powf(-decay / 2.0);
        let mn = lat.neg_index(m);
        for c in 0..3 {
            let z: C64 = complex_normal(&mut rng) * amp;
            f.comp_mut(c)[m] = z;
            f.comp_mut(c)[mn] = z.conj();
        }
    }
    f.project_divergence_free().expect("three components")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_stays_zero() {
        let g = TorusGrid::new(8).unwrap();
        let z = SpectralField::zeros(&g, 3);
        let t = solve(&z, &z, &[0.0, 0.01, 0.02], &mut Forcing::None, &StepperConfig::default()).unwrap();
        assert_eq!(t.u[2].max_abs(), 0.0);
        assert_eq!(t.b[2].max_abs(), 0.0);
    }

    #[test]
    fn cfl_violation() {
        let g = TorusGrid::new(16).unwrap();
        let z = SpectralField::zeros(&g, 3);
        let r = solve(&z, &z, &[0.0, 0.1], &mut Forcing::None, &StepperConfig::default());
        assert!(matches!(r, Err(SolverError::Cfl { .. })));
    }
}
