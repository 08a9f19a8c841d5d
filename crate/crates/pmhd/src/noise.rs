//! Mollified space-time white noise and the stationary Gaussian drivers.
//!
//! Each mode `k != 0` of a driver is an Ornstein-Uhlenbeck process with decay
//! `|k|^2` and stationary covariance `f(eps k)^2 P(k) / (2 |k|^2)`, sampled by the
//! exact discrete update between consecutive times.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::NoiseError;
use crate::lattice::as_f64;
use crate::spectral::{leray_entry, SpectralField, TorusGrid, C64, ZERO};

/// Radial cutoff `f(x) = exp(1 - 1/(1 - |x|^2))` on the unit ball, evaluated at `eps k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierCutoff {
    epsilon: f64,
}

impl MollifierCutoff {
    pub fn new(epsilon: f64) -> Result<Self, NoiseError> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(NoiseError::BadEpsilon(epsilon));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn profile(x2: f64) -> f64 {
        if x2 >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - x2)).exp()
        }
    }

    /// `f(eps k)` given `|k|^2`.
    pub fn at_k2(&self, k2: f64) -> f64 {
        Self::profile(self.epsilon * self.epsilon * k2)
    }

    pub fn at(&self, k: [i32; 3]) -> f64 {
        self.at_k2(crate::lattice::norm2(k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMode {
    /// `xi_b = xi_u`, so `X_b = X_u`.
    Identical,
    /// `xi_u` and `xi_b` independent.
    Independent,
}

impl CorrelationMode {
    /// Cross-correlation factor between the u and b drivers.
    pub fn cross(&self) -> f64 {
        match self {
            CorrelationMode::Identical => 1.0,
            CorrelationMode::Independent => 0.0,
        }
    }
}

/// Deterministic generator for `(master seed, replica)`: one ChaCha stream per replica.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Standard complex Gaussian, `E|Z|^2 = 1`.
pub fn complex_normal<R: Rng>(rng: &mut R) -> C64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    C64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

fn projected(k: [f64; 3], z: [C64; 3]) -> [C64; 3] {
    let mut out = [ZERO; 3];
    for (l, o) in out.iter_mut().enumerate() {
        *o = (0..3).map(|m| z[m] * leray_entry(k, l, m)).sum();
    }
    out
}

/// Time-indexed samples of the drivers `(X_u, X_b)`.
#[derive(Debug, Clone)]
pub struct GaussianDriverPath {
    pub grid: Arc<TorusGrid>,
    pub cutoff: MollifierCutoff,
    pub mode: CorrelationMode,
    pub times: Vec<f64>,
    pub seed: u64,
    pub replica: u64,
    pub u: Vec<SpectralField>,
    pub b: Vec<SpectralField>,
}

fn check_times(times: &[f64]) -> Result<(), NoiseError> {
    if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(NoiseError::UnsortedTimes);
    }
    Ok(())
}

struct ModeState {
    u: [C64; 3],
    b: [C64; 3],
}

/// Samples a driver path started from its stationary law at `times[0]`.
pub fn sample_driver_path(
    grid: &Arc<TorusGrid>,
    cutoff: MollifierCutoff,
    times: &[f64],
    seed: u64,
    replica: u64,
    mode: CorrelationMode,
) -> Result<GaussianDriverPath, NoiseError> {
    check_times(times)?;
    let lat = grid.lattice();
    let mut rng = replica_rng(seed, replica);
    let half = lat.half_indices();
    let draw = |rng: &mut ChaCha20Rng| -> ([C64; 3], [C64; 3]) {
        let zu = [complex_normal(rng), complex_normal(rng), complex_normal(rng)];
        let zb = match mode {
            CorrelationMode::Identical => zu,
            CorrelationMode::Independent => {
                [complex_normal(rng), complex_normal(rng), complex_normal(rng)]
            }
        };
        (zu, zb)
    };
    let mut state: Vec<ModeState> = Vec::with_capacity(half.len());
    for m in half.clone() {
        let k = as_f64(lat.mode(m));
        let k2 = lat.k2(m);
        let amp = cutoff.at_k2(k2) / (2.0 * k2).sqrt();
        let (zu, zb) = draw(&mut rng);
        let pu = projected(k, zu);
        let pb = projected(k, zb);
        state.push(ModeState { u: pu.map(|v| v * amp), b: pb.map(|v| v * amp) });
    }
    let mut us = Vec::with_capacity(times.len());
    let mut bs = Vec::with_capacity(times.len());
    let store = |state: &[ModeState], us: &mut Vec<SpectralField>, bs: &mut Vec<SpectralField>| {
        let mut u = SpectralField::zeros(grid, 3);
        let mut b = SpectralField::zeros(grid, 3);
        for (s, m) in state.iter().zip(half.clone()) {
            let mn = lat.neg_index(m);
            for c in 0..3 {
                u.comp_mut(c)[m] = s.u[c];
                u.comp_mut(c)[mn] = s.u[c].conj();
                b.comp_mut(c)[m] = s.b[c];
                b.comp_mut(c)[mn] = s.b[c].conj();
            }
        }
        us.push(u);
        bs.push(b);
    };
    store(&state, &mut us, &mut bs);
    for w in times.windows(2) {
        let h = w[1] - w[0];
        for (s, m) in state.iter_mut().zip(half.clone()) {
            let k = as_f64(lat.mode(m));
            let k2 = lat.k2(m);
            let decay = (-k2 * h).exp();
            let amp = cutoff.at_k2(k2) * (-(-2.0 * k2 * h).exp_m1() / (2.0 * k2)).sqrt();
            let (zu, zb) = draw(&mut rng);
            let pu = projected(k, zu);
            let pb = projected(k, zb);
            for c in 0..3 {
                s.u[c] = s.u[c] * decay + pu[c] * amp;
                s.b[c] = s.b[c] * decay + pb[c] * amp;
            }
        }
        store(&state, &mut us, &mut bs);
    }
    Ok(GaussianDriverPath {
        grid: grid.clone(),
        cutoff,
        mode,
        times: times.to_vec(),
        seed,
        replica,
        u: us,
        b: bs,
    })
}

impl GaussianDriverPath {
    /// Stochastic forcing over `[t_m, t_{m+1}]` as seen by an exponential
    /// integrator: `X(t_{m+1}) - e^{-|k|^2 h} X(t_m)`, for `(u, b)`.
    pub fn increment(&self, m: usize) -> (SpectralField, SpectralField) {
        let h = self.times[m + 1] - self.times[m];
        let lat = self.grid.lattice();
        let decay = |f: &SpectralField, g: &SpectralField| {
            let mut out = g.clone();
            for c in 0..3 {
                for (i, v) in out.comp_mut(c).iter_mut().enumerate() {
                    *v -= f.comp(c)[i] * (-lat.k2(i) * h).exp();
                }
            }
            out
        };
        (decay(&self.u[m], &self.u[m + 1]), decay(&self.b[m], &self.b[m + 1]))
    }

    /// A zero path with the same grid, cutoff and times.
    pub fn zeros_like(&self) -> Self {
        let z = SpectralField::zeros(&self.grid, 3);
        Self {
            u: vec![z.clone(); self.times.len()],
            b: vec![z; self.times.len()],
            ..self.clone()
        }
    }
}

/// Closed-form `E[X^a_i(k, t) X^c_j(k', s)]` for field tags `a, c` (0 = u, 1 = b).
#[allow(clippy::too_many_arguments)]
pub fn driver_covariance(
    cutoff: MollifierCutoff,
    mode: CorrelationMode,
    a: usize,
    i: usize,
    k: [i32; 3],
    t: f64,
    c: usize,
    j: usize,
    kp: [i32; 3],
    s: f64,
) -> f64 {
    if k == [0, 0, 0] || crate::lattice::add(k, kp) != [0, 0, 0] {
        return 0.0;
    }
    let tags = if a == c { 1.0 } else { mode.cross() };
    let k2 = crate::lattice::norm2(k);
    let f = cutoff.at_k2(k2);
    tags * f * f * (-k2 * (t - s).abs()).exp() / (2.0 * k2) * leray_entry(as_f64(k), i, j)
}

/// Independent white-noise increments over a step `dt`: per mode and component a
/// complex Gaussian of variance `dt f(eps k)^2`, reality-symmetric and mean-zero.
pub fn sample_white_noise_increment(
    grid: &Arc<TorusGrid>,
    cutoff: MollifierCutoff,
    dt: f64,
    rng: &mut ChaCha20Rng,
    mode: CorrelationMode,
) -> Result<(SpectralField, SpectralField), NoiseError> {
    if !(dt >= 0.0) {
        return Err(NoiseError::BadStep(dt));
    }
    let lat = grid.lattice();
    let mut u = SpectralField::zeros(grid, 3);
    let mut b = SpectralField::zeros(grid, 3);
    for m in lat.half_indices() {
        let amp = cutoff.at_k2(lat.k2(m)) * dt.sqrt();
        let mn = lat.neg_index(m);
        for c in 0..3 {
            let zu = complex_normal(rng) * amp;
            let zb = match mode {
                CorrelationMode::Identical => zu,
                CorrelationMode::Independent => complex_normal(rng) * amp,
            };
            u.comp_mut(c)[m] = zu;
            u.comp_mut(c)[mn] = zu.conj();
            b.comp_mut(c)[m] = zb;
            b.comp_mut(c)[mn] = zb.conj();
        }
    }
    Ok((u, b))
}

/// `[0]` followed by `nodes` geometrically spaced times on `[t_min, t_max]`.
pub fn geometric_time_grid(t_min: f64, t_max: f64, nodes: usize) -> Vec<f64> {
    let mut out = vec![0.0];
    if nodes == 1 {
        out.push(t_max);
        return out;
    }
    let r = (t_max / t_min).ln() / (nodes - 1) as f64;
    out.extend((0..nodes).map(|i| {
        if i + 1 == nodes {
            t_max
        } else {
            t_min * (r * i as f64).exp()
        }
    }));
    out
}

/// `steps + 1` equally spaced times on `[0, t_max]`.
pub fn uniform_time_grid(t_max: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| t_max * i as f64 / steps as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_support() {
        let c = MollifierCutoff::new(0.5).unwrap();
        assert_eq!(c.at([2, 0, 0]), 0.0);
        assert_eq!(c.at([0, 0, 0]), 1.0);
        assert!(c.at([1, 1, 1]) > 0.0);
        assert!(MollifierCutoff::new(0.0).is_err());
    }

    #[test]
    fn identical_mode_copies() {
        let g = TorusGrid::new(8).unwrap();
        let p = sample_driver_path(&g, MollifierCutoff::new(0.3).unwrap(), &[0.0, 0.1], 7, 0, CorrelationMode::Identical)
            .unwrap();
        assert_eq!(p.u[1].data(), p.b[1].data());
        assert!(p.u[1].divergence_residual() < 1e-12);
        assert!(p.u[1].reality_defect() == 0.0);
        assert!(p.u[1].is_mean_zero());
    }

    #[test]
    fn rejects_unsorted() {
        let g = TorusGrid::new(8).unwrap();
        let c = MollifierCutoff::new(0.3).unwrap();
        assert!(sample_driver_path(&g, c, &[0.1, 0.1], 1, 0, CorrelationMode::Identical).is_err());
    }

    #[test]
    fn geometric_grid_shape() {
        let t = geometric_time_grid(1e-4, 0.05, 64);
        assert_eq!(t.len(), 65);
        assert_eq!(t[0], 0.0);
        assert!((t[1] - 1e-4).abs() < 1e-18);
        assert_eq!(*t.last().unwrap(), 0.05);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
    }
}
