#![allow(dead_code)]

use std::sync::Arc;

use pmhd::spectral::{SpectralField, TorusGrid, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Real field with uniform random coefficients on every retained mode.
pub fn random_real(grid: &Arc<TorusGrid>, ncomp: usize, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = SpectralField::from_fn(grid, ncomp, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    f.enforce_reality();
    f
}

pub fn rel_diff(a: &SpectralField, b: &SpectralField) -> f64 {
    let d = a.sub(b).unwrap().l2_norm();
    d / b.l2_norm().max(f64::MIN_POSITIVE)
}
