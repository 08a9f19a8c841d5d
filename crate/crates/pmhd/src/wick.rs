//! Wick products of jointly Gaussian mode variables and their pairing expansions.
//!
//! Covariances are taken on ordered pairs without conjugation, `E[X(k) X(k')]`,
//! which is nonzero only for `k + k' = 0`.

use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::WickError;
use crate::noise::{complex_normal, driver_covariance, CorrelationMode, MollifierCutoff};
use crate::spectral::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum FieldTag {
    U,
    B,
}

impl FieldTag {
    pub fn index(self) -> usize {
        match self {
            FieldTag::U => 0,
            FieldTag::B => 1,
        }
    }
}

/// One Gaussian mode variable `X^tag_comp(mode, time)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussVar {
    pub tag: FieldTag,
    pub comp: usize,
    pub mode: [i32; 3],
    pub time: f64,
}

pub trait CovarianceOracle {
    fn cov(&self, a: &GaussVar, b: &GaussVar) -> C64;
}

/// Oracle given by the driver covariance.
#[derive(Debug, Clone, Copy)]
pub struct DriverOracle {
    pub cutoff: MollifierCutoff,
    pub mode: CorrelationMode,
}

impl CovarianceOracle for DriverOracle {
    fn cov(&self, a: &GaussVar, b: &GaussVar) -> C64 {
        C64::new(
            driver_covariance(
                self.cutoff,
                self.mode,
                a.tag.index(),
                a.comp,
                a.mode,
                a.time,
                b.tag.index(),
                b.comp,
                b.mode,
                b.time,
            ),
            0.0,
        )
    }
}

/// Oracle backed by an explicit symmetric matrix over variable slots; variables
/// are identified by their `comp` field used as slot index.
#[derive(Debug, Clone)]
pub struct MatrixOracle {
    pub matrix: Vec<Vec<C64>>,
}

impl CovarianceOracle for MatrixOracle {
    fn cov(&self, a: &GaussVar, b: &GaussVar) -> C64 {
        self.matrix[a.comp][b.comp]
    }
}

/// Term of a Wick expansion: `sign * prod E[pairs] * prod free variables`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WickTerm {
    pub sign: i32,
    pub pairs: Vec<(usize, usize)>,
    pub free: Vec<usize>,
}

/// All partial matchings of `0..n`, each with the recentering sign `(-1)^{#pairs}`.
pub fn wick_expansion(n: usize) -> Result<Vec<WickTerm>, WickError> {
    if n == 0 || n > 4 {
        return Err(WickError::Degree(n));
    }
    let mut out = Vec::new();
    partial_matchings(&(0..n).collect::<Vec<_>>(), &mut Vec::new(), &mut Vec::new(), &mut out);
    Ok(out)
}

fn partial_matchings(
    rest: &[usize],
    pairs: &mut Vec<(usize, usize)>,
    free: &mut Vec<usize>,
    out: &mut Vec<WickTerm>,
) {
    let Some((&first, tail)) = rest.split_first() else {
        let sign = if pairs.len() % 2 == 0 { 1 } else { -1 };
        let mut f = free.clone();
        f.sort_unstable();
        out.push(WickTerm { sign, pairs: pairs.clone(), free: f });
        return;
    };
    free.push(first);
    partial_matchings(tail, pairs, free, out);
    free.pop();
    for (pos, &other) in tail.iter().enumerate() {
        let mut remaining = tail.to_vec();
        remaining.remove(pos);
        pairs.push((first, other));
        partial_matchings(&remaining, pairs, free, out);
        pairs.pop();
    }
}

/// `:x_1 ... x_n:` evaluated on sample values.
pub fn wick_product(
    vars: &[GaussVar],
    values: &[C64],
    oracle: &dyn CovarianceOracle,
) -> Result<C64, WickError> {
    let terms = wick_expansion(vars.len())?;
    Ok(terms
        .iter()
        .map(|t| {
            let mut v = C64::new(t.sign as f64, 0.0);
            for &(a, b) in &t.pairs {
                v *= oracle.cov(&vars[a], &vars[b]);
            }
            for &i in &t.free {
                v *= values[i];
            }
            v
        })
        .sum())
}

/// One bijection `left[i] <-> right[perm[i]]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Pairing {
    pub perm: Vec<usize>,
}

/// Pairings connecting a degree-n Wick monomial to another: `n!` of them.
pub fn cross_pairings(n: usize) -> Vec<Pairing> {
    let mut out = Vec::new();
    permutations(&mut (0..n).collect::<Vec<_>>(), 0, &mut out);
    out.into_iter().map(|perm| Pairing { perm }).collect()
}

fn permutations(v: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == v.len() {
        out.push(v.clone());
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, out);
        v.swap(k, i);
    }
}

/// `E[:left: :right:]` as the sum over cross pairings; zero for unequal degrees.
pub fn pairing_expectation(
    left: &[GaussVar],
    right: &[GaussVar],
    oracle: &dyn CovarianceOracle,
) -> Result<C64, WickError> {
    for side in [left, right] {
        if side.is_empty() || side.len() > 4 {
            return Err(WickError::Degree(side.len()));
        }
    }
    if left.len() != right.len() {
        return Ok(C64::new(0.0, 0.0));
    }
    Ok(cross_pairings(left.len())
        .iter()
        .map(|p| {
            p.perm
                .iter()
                .enumerate()
                .map(|(i, &j)| oracle.cov(&left[i], &right[j]))
                .product::<C64>()
        })
        .sum())
}

/// JSON-friendly term list of a cross-pairing expansion.
#[derive(Debug, Clone, Serialize)]
pub struct PairingExport {
    pub degree: usize,
    pub terms: Vec<Vec<(usize, usize)>>,
}

pub fn export_pairings(n: usize) -> PairingExport {
    PairingExport {
        degree: n,
        terms: cross_pairings(n)
            .into_iter()
            .map(|p| p.perm.iter().enumerate().map(|(i, &j)| (i, j)).collect())
            .collect(),
    }
}

/// `E[x_1 ... x_n]` by summing over all perfect matchings (Isserlis).
pub fn isserlis(vars: &[GaussVar], oracle: &dyn CovarianceOracle) -> C64 {
    if vars.is_empty() {
        return C64::new(1.0, 0.0);
    }
    if vars.len() % 2 == 1 {
        return C64::new(0.0, 0.0);
    }
    let first = vars[0];
    let mut total = C64::new(0.0, 0.0);
    for j in 1..vars.len() {
        let mut rest: Vec<GaussVar> = vars[1..].to_vec();
        rest.remove(j - 1);
        total += oracle.cov(&first, &vars[j]) * isserlis(&rest, oracle);
    }
    total
}

/// `E[:left: :right:]` by expanding both Wick products into monomials and
/// applying Isserlis to every product of free variables.
pub fn expanded_expectation(
    left: &[GaussVar],
    right: &[GaussVar],
    oracle: &dyn CovarianceOracle,
) -> Result<C64, WickError> {
    let el = wick_expansion(left.len())?;
    let er = wick_expansion(right.len())?;
    let weight = |t: &WickTerm, vars: &[GaussVar]| {
        t.pairs.iter().fold(C64::new(t.sign as f64, 0.0), |acc, &(a, b)| acc * oracle.cov(&vars[a], &vars[b]))
    };
    let mut total = C64::new(0.0, 0.0);
    for tl in &el {
        for tr in &er {
            let mut free: Vec<GaussVar> = tl.free.iter().map(|&i| left[i]).collect();
            free.extend(tr.free.iter().map(|&i| right[i]));
            total += weight(tl, left) * weight(tr, right) * isserlis(&free, oracle);
        }
    }
    Ok(total)
}

/// Samples jointly Gaussian complex variables with a prescribed "covariance"
/// structure of the form used here: each variable is a fixed linear
/// combination of i.i.d. standard complex Gaussians and their conjugates.
pub trait GaussianSampler {
    fn sample(&mut self, rng: &mut ChaCha20Rng) -> Vec<C64>;
}

/// Sampler for a list of variables that are linear in a finite set of
/// standard complex Gaussians: `x_i = sum_r A_ir z_r + B_ir conj(z_r)`.
#[derive(Debug, Clone)]
pub struct LinearGaussian {
    pub a: Vec<Vec<C64>>,
    pub b: Vec<Vec<C64>>,
}

impl GaussianSampler for LinearGaussian {
    fn sample(&mut self, rng: &mut ChaCha20Rng) -> Vec<C64> {
        let r = self.a.first().map_or(0, |row| row.len());
        let z: Vec<C64> = (0..r).map(|_| complex_normal(rng)).collect();
        self.a
            .iter()
            .zip(&self.b)
            .map(|(ra, rb)| {
                ra.iter()
                    .zip(rb)
                    .zip(&z)
                    .map(|((x, y), zr)| x * zr + y * zr.conj())
                    .sum()
            })
            .collect()
    }
}

impl LinearGaussian {
    /// `E[x_i x_j]` implied by the coefficients.
    pub fn covariance(&self, i: usize, j: usize) -> C64 {
        (0..self.a[i].len())
            .map(|r| self.a[i][r] * self.b[j][r] + self.b[i][r] * self.a[j][r])
            .sum()
    }
}

/// Draws the listed driver variables from full sampled paths on a grid; every
/// call uses the next replica stream of the master seed.
pub struct DriverSampler {
    pub grid: std::sync::Arc<crate::spectral::TorusGrid>,
    pub cutoff: MollifierCutoff,
    pub mode: CorrelationMode,
    pub vars: Vec<GaussVar>,
    pub seed: u64,
    times: Vec<f64>,
    next_replica: u64,
}

impl DriverSampler {
    pub fn new(
        grid: &std::sync::Arc<crate::spectral::TorusGrid>,
        cutoff: MollifierCutoff,
        mode: CorrelationMode,
        vars: Vec<GaussVar>,
        seed: u64,
    ) -> Self {
        let mut times: Vec<f64> = vars.iter().map(|v| v.time).collect();
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        times.dedup();
        Self { grid: grid.clone(), cutoff, mode, vars, seed, times, next_replica: 0 }
    }
}

impl GaussianSampler for DriverSampler {
    fn sample(&mut self, _rng: &mut ChaCha20Rng) -> Vec<C64> {
        let path = crate::noise::sample_driver_path(
            &self.grid,
            self.cutoff,
            &self.times,
            self.seed,
            self.next_replica,
            self.mode,
        )
        .expect("validated times");
        self.next_replica += 1;
        self.vars
            .iter()
            .map(|v| {
                let ti = self.times.iter().position(|&t| t == v.time).expect("time present");
                let field = match v.tag {
                    FieldTag::U => &path.u[ti],
                    FieldTag::B => &path.b[ti],
                };
                field.coeff(v.comp, v.mode).unwrap_or(C64::new(0.0, 0.0))
            })
            .collect()
    }
}

/// Monte Carlo check of `E[:left: :right:]`.
#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub samples: usize,
    pub mean_re: f64,
    pub mean_im: f64,
    pub se_re: f64,
    pub se_im: f64,
    pub expected_re: f64,
    pub expected_im: f64,
    pub z_re: f64,
    pub z_im: f64,
}

impl McReport {
    pub fn max_abs_z(&self) -> f64 {
        self.z_re.abs().max(self.z_im.abs())
    }
}

/// Samples `:left: * :right:` where the first `left.len()` sampled values belong
/// to `left` and the rest to `right`.
pub fn mc_validate(
    left: &[GaussVar],
    right: &[GaussVar],
    oracle: &dyn CovarianceOracle,
    sampler: &mut dyn GaussianSampler,
    samples: usize,
    rng: &mut ChaCha20Rng,
) -> Result<McReport, WickError> {
    if samples < 100 {
        return Err(WickError::TooFewSamples(samples));
    }
    let expected = pairing_expectation(left, right, oracle)?;
    let mut acc = crate::stats::Welford2::default();
    for _ in 0..samples {
        let vals = sampler.sample(rng);
        let l = wick_product(left, &vals[..left.len()], oracle)?;
        let r = wick_product(right, &vals[left.len()..], oracle)?;
        acc.push(l * r);
    }
    let (mean, se) = acc.mean_se();
    let z = |m: f64, e: f64, s: f64| if s > 0.0 { (m - e) / s } else if (m - e).abs() < 1e-12 { 0.0 } else { f64::INFINITY };
    Ok(McReport {
        samples,
        mean_re: mean.re,
        mean_im: mean.im,
        se_re: se.0,
        se_im: se.1,
        expected_re: expected.re,
        expected_im: expected.im,
        z_re: z(mean.re, expected.re, se.0),
        z_im: z(mean.im, expected.im, se.1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expansion_sizes() {
        // partial matchings: 1, 2, 4, 10
        let sizes: Vec<usize> = (1..=4).map(|n| wick_expansion(n).unwrap().len()).collect();
        assert_eq!(sizes, vec![1, 2, 4, 10]);
        assert!(wick_expansion(5).is_err());
        let counts: Vec<usize> = (1..=4).map(|n| cross_pairings(n).len()).collect();
        assert_eq!(counts, vec![1, 2, 6, 24]);
    }

    #[test]
    fn degree_two_constant_cov() {
        let m = MatrixOracle { matrix: vec![vec![C64::new(0.7, 0.0); 4]; 4] };
        let v = |c| GaussVar { tag: FieldTag::U, comp: c, mode: [0, 0, 0], time: 0.0 };
        let e = pairing_expectation(&[v(0), v(1)], &[v(2), v(3)], &m).unwrap();
        assert!((e.re - 2.0 * 0.49).abs() < 1e-15);
        let z = pairing_expectation(&[v(0), v(1)], &[v(2)], &m).unwrap();
        assert_eq!(z, C64::new(0.0, 0.0));
    }
}
