//! Renormalization constants as lattice sums.
//!
//! Time integrals are evaluated in closed form per mode. Every evaluation also
//! reports the sum of absolute summands so vanishing checks can be scale-relative.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use rayon::prelude::*;

use crate::besov::{block_profile, DyadicPartition};
use crate::lattice::{as_f64, Lattice};
use crate::noise::{CorrelationMode, MollifierCutoff};
use crate::spectral::leray_matrix;

pub type Mat = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];

const ZERO_MAT: Mat = [[0.0; 3]; 3];

fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let mut c = ZERO_MAT;
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    c
}

fn mat_vec(a: &Mat, v: &Vec3) -> Vec3 {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn outer_acc(acc: &mut Mat, s: f64, a: &Vec3, b: &Vec3) {
    for i in 0..3 {
        for j in 0..3 {
            acc[i][j] += s * a[i] * b[j];
        }
    }
}

fn mat_acc(acc: &mut Mat, s: f64, a: &Mat) {
    for i in 0..3 {
        for j in 0..3 {
            acc[i][j] += s * a[i][j];
        }
    }
}

fn mat_add(a: &Mat, b: &Mat) -> Mat {
    let mut c = *a;
    mat_acc(&mut c, 1.0, b);
    c
}

/// `int_0^t e^{-a(t-s)} ds`.
pub fn heat_integral(a: f64, t: f64) -> f64 {
    if a * t < 1e-12 {
        t
    } else {
        -(-a * t).exp_m1() / a
    }
}

/// `int_0^t e^{-p(t-s)} e^{-q s} ds`, symmetric in `p` and `q`.
pub fn mixed_integral(p: f64, q: f64, t: f64) -> f64 {
    let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
    let d = hi - lo;
    let base = (-lo * t).exp();
    if d * t < 1e-10 {
        base * t * (1.0 - 0.5 * d * t)
    } else {
        base * (-(-d * t).exp_m1()) / d
    }
}

/// `int_0^t int_0^t e^{-a(2t-s-r)} e^{-c|s-r|} ds dr`.
pub fn two_time_integral(a: f64, c: f64, t: f64) -> f64 {
    2.0 / (a + c) * (heat_integral(2.0 * a, t) - mixed_integral(2.0 * a, a + c, t))
}

/// `int_0^t e^{-a(t-s)} int_0^s e^{-b(s-r)} e^{-a(t-r)} dr ds`.
pub fn nested_time_integral(a: f64, b: f64, t: f64) -> f64 {
    (heat_integral(2.0 * a, t) - mixed_integral(2.0 * a, a + b, t)) / (a + b)
}

/// Stationary weight `f(eps k)^2 / (2|k|^2)` of a driver mode.
fn mode_weight(cutoff: &MollifierCutoff, k2: f64) -> f64 {
    if k2 == 0.0 {
        0.0
    } else {
        let f = cutoff.at_k2(k2);
        f * f / (2.0 * k2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ConstantLabel {
    C01,
    C02,
    C03,
    C04,
    C21,
    C22,
    C23,
    C24,
    C11,
    C12,
    C13,
    C14,
    C138,
    Ct5,
    C3,
    C378,
}

impl fmt::Display for ConstantLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

/// One evaluated constant, ready for the CSV table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RenormConstant {
    pub label: ConstantLabel,
    pub i: usize,
    pub j: usize,
    pub epsilon: f64,
    pub k_max: i32,
    pub t: Option<f64>,
    pub value: f64,
    pub runtime_ms: f64,
}

pub const CSV_HEADER: &str = "label,i,j,epsilon,k_max,t,value,runtime_ms";

impl RenormConstant {
    pub fn csv_row(&self) -> String {
        let t = self.t.map(|t| format!("{:.16e}", t)).unwrap_or_default();
        format!(
            "{},{},{},{:.16e},{},{},{:.16e},{:.3}",
            self.label, self.i, self.j, self.epsilon, self.k_max, t, self.value, self.runtime_ms
        )
    }
}

/// `C0` value with a flag raised when the cutoff support leaves the lattice.
#[derive(Debug, Clone, Copy)]
pub struct C0Value {
    pub value: f64,
    pub truncated: bool,
}

/// True when some mode outside `[-k_max, k_max]^3` still has `f(eps k) > 0`.
pub fn support_truncated(cutoff: &MollifierCutoff, k_max: i32) -> bool {
    cutoff.epsilon() * (k_max as f64 + 1.0) < 1.0
}

/// `E[u_1^i u_1^j]` at a point: `(2 pi)^{-3} sum_{k != 0} f(eps k)^2 P^{ij}(k) / (2|k|^2)`.
pub fn c0_constant(i: usize, j: usize, cutoff: &MollifierCutoff, k_max: i32) -> C0Value {
    let m = c0_matrix(cutoff, k_max);
    C0Value { value: m[i][j], truncated: support_truncated(cutoff, k_max) }
}

/// All nine entries of `C01`, summed plane by plane.
pub fn c0_matrix(cutoff: &MollifierCutoff, k_max: i32) -> Mat {
    let r = k_max.min((1.0 / cutoff.epsilon()).ceil() as i32);
    let planes: Vec<Mat> = (-r..=r)
        .into_par_iter()
        .map(|a| {
            let mut acc = ZERO_MAT;
            for b in -r..=r {
                for c in -r..=r {
                    if a == 0 && b == 0 && c == 0 {
                        continue;
                    }
                    let k = [a as f64, b as f64, c as f64];
                    let w = mode_weight(cutoff, dot(&k, &k));
                    if w == 0.0 {
                        continue;
                    }
                    let p = leray_matrix(k);
                    let pp = mat_mul(&p, &p);
                    mat_acc(&mut acc, w, &pp);
                }
            }
            acc
        })
        .collect();
    let mut total = ZERO_MAT;
    for p in &planes {
        mat_acc(&mut total, 1.0, p);
    }
    let norm = (2.0 * PI).powi(-3);
    total.map(|row| row.map(|x| x * norm))
}

/// `C01..C04` in order `(u,u), (b,b), (u,b), (b,u)`.
pub fn c0_family(cutoff: &MollifierCutoff, k_max: i32, mode: CorrelationMode) -> [Mat; 4] {
    let m = c0_matrix(cutoff, k_max);
    let cross = m.map(|row| row.map(|x| x * mode.cross()));
    [m, m, cross, cross]
}

/// Outcome of a literal lattice-sum evaluation of a constant printed as zero.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct VanishingResult {
    pub re: f64,
    pub im: f64,
    /// Sum of absolute values of all summands.
    pub scale: f64,
    pub tolerance: f64,
}

impl VanishingResult {
    pub fn magnitude(&self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn pass(&self) -> bool {
        self.magnitude() <= self.tolerance * self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum VanishingKind {
    Ct5,
    C3,
    C378,
}

impl VanishingKind {
    pub fn label(&self) -> ConstantLabel {
        match self {
            VanishingKind::Ct5 => ConstantLabel::Ct5,
            VanishingKind::C3 => ConstantLabel::C3,
            VanishingKind::C378 => ConstantLabel::C378,
        }
    }
}

/// Free indices of a vanishing constant: `(i, j, i1)` for `Ct5`, `(i0, j0, i1)` otherwise.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct VanishingParams {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub t: f64,
}

pub const VANISHING_TOLERANCE: f64 = 1e-12;

/// Sum over the lattice of `|i - j| <= 1` products of block profiles at `|k|`.
fn adjacent_block_weight(blocks: std::ops::RangeInclusive<i32>, r: f64) -> f64 {
    let w: Vec<f64> = blocks.clone().map(|q| block_profile(q, r)).collect();
    let mut s = 0.0;
    for x in 0..w.len() {
        for y in x.saturating_sub(1)..(x + 2).min(w.len()) {
            s += w[x] * w[y];
        }
    }
    s
}

/// Evaluates the printed summand term by term (all inner indices expanded) and sums.
pub fn vanishing_constant_check(
    kind: VanishingKind,
    params: VanishingParams,
    cutoff: &MollifierCutoff,
    lattice: &Lattice,
) -> VanishingResult {
    let VanishingParams { a, b, c, t } = params;
    let blocks = DyadicPartition::new(lattice).blocks();
    let zero = lattice.zero_index();
    let terms: Vec<(f64, f64)> = (0..lattice.len())
        .into_par_iter()
        .filter(|&m| m != zero)
        .map(|m| {
            let k = as_f64(lattice.mode(m));
            let k2 = lattice.k2(m);
            let f = cutoff.at_k2(k2);
            let p = leray_matrix(k);
            let time = heat_integral(2.0 * k2, t);
            let mut im = 0.0;
            let mut abs = 0.0;
            match kind {
                VanishingKind::Ct5 => {
                    let (i, j, i1) = (a, b, c);
                    let pre = 1.0 / (2.0 * (2.0 * PI).powi(3)) * time * f * f / (2.0 * k2);
                    for i2 in 0..3 {
                        for i3 in 0..3 {
                            let s = pre * k[i2] * p[i][i1] * p[i2][i3] * p[j][i3];
                            im += s;
                            abs += s.abs();
                        }
                    }
                }
                VanishingKind::C3 | VanishingKind::C378 => {
                    let (i0, j0, i1) = (a, b, c);
                    let theta = adjacent_block_weight(blocks.clone(), k2.sqrt());
                    let pre = if kind == VanishingKind::C3 {
                        (2.0 * PI).powf(-4.5) * f * f / k2
                    } else {
                        1.0 / (2.0 * (2.0 * PI).powi(3)) * f * f / (2.0 * k2)
                    };
                    let pre = pre * theta * time;
                    for j1 in 0..3 {
                        for i4 in 0..3 {
                            let s = pre * p[j1][i4] * p[j0][i4] * k[j1] * p[i0][i1];
                            im += s;
                            abs += s.abs();
                        }
                    }
                }
            }
            (im, abs)
        })
        .collect();
    let mut im = 0.0;
    let mut scale = 0.0;
    for (x, s) in terms {
        im += x;
        scale += s;
    }
    VanishingResult { re: 0.0, im, scale, tolerance: VANISHING_TOLERANCE }
}

/// Projector bracket multiplying the double time integral in the `C23` sum,
/// as printed: eight signed terms built from two repeated products.
/// Returns `(value, sum of |terms|)`.
pub fn c23_bracket(k1: Vec3, k2: Vec3, i1: usize, i2: usize, j1: usize, j2: usize) -> (f64, f64) {
    let p1 = leray_matrix(k1);
    let p2 = leray_matrix(k2);
    let mut first = 0.0;
    let mut second = 0.0;
    for j3 in 0..3 {
        for j4 in 0..3 {
            first += p2[i2][j4] * p2[j1][j4] * p1[i1][j3] * p1[j2][j3];
            second += p2[i2][j4] * p2[j2][j4] * p1[i1][j3] * p1[j1][j3];
        }
    }
    let signs = [1.0, 1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0];
    let mut value = 0.0;
    let mut abs = 0.0;
    for (n, s) in signs.iter().enumerate() {
        let term = if n % 2 == 0 { first } else { second };
        value += s * term;
        abs += term.abs();
    }
    (value, abs)
}

/// Literal evaluation of the coupled level-2 constant `C23^{ij}(t)`.
pub fn c23_constant(
    i: usize,
    j: usize,
    t: f64,
    cutoff: &MollifierCutoff,
    lattice: &Lattice,
) -> VanishingResult {
    let zero = lattice.zero_index();
    let pre = 1.0 / (4.0 * (2.0 * PI).powf(4.5));
    let rows: Vec<(f64, f64)> = (0..lattice.len())
        .into_par_iter()
        .filter(|&m| m != zero)
        .map(|m1| {
            let k1i = lattice.mode(m1);
            let k1 = as_f64(k1i);
            let w1 = mode_weight(cutoff, lattice.k2(m1));
            let mut val = 0.0;
            let mut abs = 0.0;
            if w1 == 0.0 {
                return (val, abs);
            }
            for m2 in 0..lattice.len() {
                if m2 == zero {
                    continue;
                }
                let w2 = mode_weight(cutoff, lattice.k2(m2));
                if w2 == 0.0 {
                    continue;
                }
                let k2 = as_f64(lattice.mode(m2));
                let k12 = [k1[0] + k2[0], k1[1] + k2[1], k1[2] + k2[2]];
                let a = dot(&k12, &k12);
                if a == 0.0 {
                    continue;
                }
                let c = lattice.k2(m1) + lattice.k2(m2);
                let time = two_time_integral(a, c, t);
                let p12 = leray_matrix(k12);
                let base = pre * time * w1 * w2;
                for i1 in 0..3 {
                    for i2 in 0..3 {
                        for j1 in 0..3 {
                            for j2 in 0..3 {
                                let outer = p12[i][i1] * p12[j][j1] * k12[i2] * k12[j2];
                                if outer == 0.0 {
                                    continue;
                                }
                                let (b, b_abs) = c23_bracket(k1, k2, i1, i2, j1, j2);
                                val += base * outer * b;
                                abs += (base * outer).abs() * b_abs;
                            }
                        }
                    }
                }
            }
            (val, abs)
        })
        .collect();
    let mut re = 0.0;
    let mut scale = 0.0;
    for (v, s) in rows {
        re += v;
        scale += s;
    }
    VanishingResult { re, im: 0.0, scale, tolerance: VANISHING_TOLERANCE }
}

/// Precomputed projector, `|k|^2` and driver weight for every lattice mode.
struct ModeTable {
    k: Vec<Vec3>,
    k2: Vec<f64>,
    p: Vec<Mat>,
    w: Vec<f64>,
}

impl ModeTable {
    fn new(lattice: &Lattice, cutoff: &MollifierCutoff) -> Self {
        let k: Vec<Vec3> = lattice.modes().iter().map(|&m| as_f64(m)).collect();
        let k2 = lattice.k2_table().to_vec();
        let p = k.iter().map(|&v| leray_matrix(v)).collect();
        let w = k2.iter().map(|&x| mode_weight(cutoff, x)).collect();
        Self { k, k2, p, w }
    }
}

/// Representative divergent level-3/level-1 constant `C138^{i0 j0}(t)`, literal sum
/// over `k1, k2 != 0` with `k1 + k2` kept on the lattice.
pub fn c138_constant(
    i0: usize,
    j0: usize,
    t: f64,
    cutoff: &MollifierCutoff,
    lattice: &Lattice,
) -> f64 {
    let blocks = DyadicPartition::new(lattice).blocks();
    let tab = ModeTable::new(lattice, cutoff);
    let zero = lattice.zero_index();
    let pre = -1.0 / (4.0 * (2.0 * PI).powf(4.5));
    let rows: Vec<f64> = (0..lattice.len())
        .into_par_iter()
        .filter(|&m| m != zero && tab.w[m] != 0.0)
        .map(|m2| {
            let k2 = tab.k[m2];
            let a = tab.k2[m2];
            let theta = adjacent_block_weight(blocks.clone(), a.sqrt());
            if theta == 0.0 {
                return 0.0;
            }
            let p2 = &tab.p[m2];
            let mut acc = 0.0;
            for m1 in 0..lattice.len() {
                if m1 == zero || tab.w[m1] == 0.0 {
                    continue;
                }
                let k1 = tab.k[m1];
                let k12i = crate::lattice::add(lattice.mode(m1), lattice.mode(m2));
                let Some(m12) = lattice.index(k12i) else { continue };
                if m12 == zero {
                    continue;
                }
                let k12 = [k1[0] + k2[0], k1[1] + k2[1], k1[2] + k2[2]];
                let p1 = &tab.p[m1];
                let p12 = &tab.p[m12];
                let b = tab.k2[m12] + tab.k2[m1];
                let time = nested_time_integral(a, b, t);
                // first product: (k12 . P1 . k2) (P2 P12 P2)^{i0 j0}
                let p1k2 = mat_vec(p1, &k2);
                let first = dot(&k12, &p1k2) * mat_mul(&mat_mul(p2, p12), p2)[i0][j0];
                // second product: (P2 P12 P1 k2)^{i0} (P2 k12)^{j0}
                let left = mat_vec(&mat_mul(p2, p12), &p1k2)[i0];
                let right = mat_vec(p2, &k12)[j0];
                acc += pre * theta * tab.w[m1] * tab.w[m2] * time * (first + left * right);
            }
            acc
        })
        .collect();
    rows.iter().sum()
}

/// Gaussian field types entering the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    U,
    B,
}

fn corr(mode: CorrelationMode, a: Kind, b: Kind) -> f64 {
    if a == b {
        1.0
    } else {
        mode.cross()
    }
}

/// Signed Wick-square terms of the level-2 right-hand sides:
/// `u2: u1 u1 - b1 b1`, `b2: b1 u1 - u1 b1`.
fn level2_terms(y: Kind) -> [(f64, Kind, Kind); 2] {
    match y {
        Kind::U => [(1.0, Kind::U, Kind::U), (-1.0, Kind::B, Kind::B)],
        Kind::B => [(1.0, Kind::B, Kind::U), (-1.0, Kind::U, Kind::B)],
    }
}

/// Slot of a level-3 product term: level-1 of the given kind, level-2 of the given kind.
#[derive(Debug, Clone, Copy)]
enum Slot {
    FirstIsLevel1 { l1: Kind, l2: Kind },
    SecondIsLevel1 { l2: Kind, l1: Kind },
}

/// Signed product terms of the level-3 right-hand sides.
fn level3_terms(y: Kind) -> [(f64, Slot); 4] {
    use Kind::*;
    match y {
        U => [
            (1.0, Slot::FirstIsLevel1 { l1: U, l2: U }),
            (1.0, Slot::SecondIsLevel1 { l2: U, l1: U }),
            (-1.0, Slot::FirstIsLevel1 { l1: B, l2: B }),
            (-1.0, Slot::SecondIsLevel1 { l2: B, l1: B }),
        ],
        B => [
            (1.0, Slot::FirstIsLevel1 { l1: B, l2: U }),
            (1.0, Slot::SecondIsLevel1 { l2: B, l1: U }),
            (-1.0, Slot::FirstIsLevel1 { l1: U, l2: B }),
            (-1.0, Slot::SecondIsLevel1 { l2: U, l1: B }),
        ],
    }
}

/// Exact means of the level-2 squares and of the level-3/level-1 resonant products.
#[derive(Debug, Clone)]
pub struct TreeMeans {
    pub times: Vec<f64>,
    /// `E[u2^i u2^m]`, `E[b2^i b2^m]`, `E[b2^i u2^m]` per time.
    pub level2: Vec<[Mat; 3]>,
    /// `E[pi0(u3^i, u1^m)]`, `E[pi0(b3^i, b1^m)]`, `E[pi0(u3^i, b1^m)]`, `E[pi0(b3^i, u1^m)]`.
    pub level3: Vec<[Mat; 4]>,
}

pub const LEVEL2_PAIRS: [(Kind, Kind); 3] = [(Kind::U, Kind::U), (Kind::B, Kind::B), (Kind::B, Kind::U)];
pub const LEVEL3_PAIRS: [(Kind, Kind); 4] =
    [(Kind::U, Kind::U), (Kind::B, Kind::B), (Kind::U, Kind::B), (Kind::B, Kind::U)];

/// Coefficients `(S1, S2)` of the two pairing structures in `E[Y^i Y'^m]`.
fn level2_coefficients(mode: CorrelationMode, y: Kind, y2: Kind) -> (f64, f64) {
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for (s, a, b) in level2_terms(y) {
        for (s_, c, d) in level2_terms(y2) {
            s1 += s * s_ * corr(mode, a, c) * corr(mode, b, d);
            s2 += s * s_ * corr(mode, a, d) * corr(mode, b, c);
        }
    }
    (s1, s2)
}

/// Coefficients of the four pairing structures in `E[y3^i X^m]`.
fn level3_coefficients(mode: CorrelationMode, y: Kind, x: Kind) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (s, slot) in level3_terms(y) {
        let (l1, l2, base) = match slot {
            Slot::FirstIsLevel1 { l1, l2 } => (l1, l2, 0),
            Slot::SecondIsLevel1 { l2, l1 } => (l1, l2, 2),
        };
        for (s_, a, b) in level2_terms(l2) {
            out[base] += s * s_ * corr(mode, l1, a) * corr(mode, b, x);
            out[base + 1] += s * s_ * corr(mode, l1, b) * corr(mode, a, x);
        }
    }
    out
}

/// Evaluates [`TreeMeans`] at the given times on the lattice.
pub fn tree_means(
    lattice: &Lattice,
    cutoff: &MollifierCutoff,
    mode: CorrelationMode,
    times: &[f64],
) -> TreeMeans {
    let tab = ModeTable::new(lattice, cutoff);
    let zero = lattice.zero_index();
    let nt = times.len();
    // per time: two level-2 structures and four level-3 structures
    let partial: Vec<Vec<[Mat; 6]>> = (0..lattice.len())
        .into_par_iter()
        .filter(|&m| m != zero)
        .map(|mk| {
            let mut acc = vec![[ZERO_MAT; 6]; nt];
            let k = tab.k[mk];
            let a = tab.k2[mk];
            let pk = &tab.p[mk];
            let wk = tab.w[mk];
            let ki = lattice.mode(mk);
            for m1 in 0..lattice.len() {
                if m1 == zero || tab.w[m1] == 0.0 {
                    continue;
                }
                let qi = crate::lattice::sub(ki, lattice.mode(m1));
                let Some(mq) = lattice.index(qi) else { continue };
                if mq == zero {
                    continue;
                }
                let p1 = &tab.p[m1];
                let pq = &tab.p[mq];
                let q = tab.k[mq];
                let pkp1 = mat_mul(pk, p1);
                // level-2 square: k1 and k2 = q both driver modes
                if tab.w[mq] != 0.0 {
                    let c = tab.k2[m1] + tab.k2[mq];
                    let kpqk = dot(&k, &mat_vec(pq, &k));
                    let s1 = mat_mul(&pkp1, pk);
                    let v1 = mat_vec(&pkp1, &k);
                    let v2 = mat_vec(&mat_mul(pk, pq), &k);
                    for (n, &t) in times.iter().enumerate() {
                        let wt = tab.w[m1] * tab.w[mq] * two_time_integral(a, c, t);
                        mat_acc(&mut acc[n][0], wt * kpqk, &s1);
                        outer_acc(&mut acc[n][1], wt, &v1, &v2);
                    }
                }
                // level-3 against level-1: p = k1 driver mode, q level-2 mode, k also a driver mode
                if wk != 0.0 {
                    let b = tab.k2[m1] + tab.k2[mq];
                    let pkq = mat_vec(pk, &q);
                    let pkpq = mat_mul(pk, pq);
                    let a1 = mat_vec(&mat_mul(&pkp1, pq), &k);
                    let a2 = mat_vec(&pkp1, &q);
                    let b2 = mat_vec(&pkpq, &k);
                    let c1 = mat_vec(&mat_mul(&pkpq, p1), &k);
                    let kpq = dot(&k, &mat_vec(p1, &q));
                    let d = mat_mul(&pkpq, pk);
                    for (n, &t) in times.iter().enumerate() {
                        let wt = -wk * tab.w[m1] * nested_time_integral(a, b, t);
                        outer_acc(&mut acc[n][2], wt, &a1, &pkq);
                        outer_acc(&mut acc[n][3], wt, &a2, &b2);
                        outer_acc(&mut acc[n][4], wt, &c1, &pkq);
                        mat_acc(&mut acc[n][5], wt * kpq, &d);
                    }
                }
            }
            acc
        })
        .collect();
    let mut tot = vec![[ZERO_MAT; 6]; nt];
    for part in &partial {
        for n in 0..nt {
            for s in 0..6 {
                tot[n][s] = mat_add(&tot[n][s], &part[n][s]);
            }
        }
    }
    let pre = 0.25 * (2.0 * PI).powi(-6);
    let mut level2 = Vec::with_capacity(nt);
    let mut level3 = Vec::with_capacity(nt);
    for n in 0..nt {
        let mut l2 = [ZERO_MAT; 3];
        for (slot, &(y, y2)) in LEVEL2_PAIRS.iter().enumerate() {
            let (s1, s2) = level2_coefficients(mode, y, y2);
            mat_acc(&mut l2[slot], pre * s1, &tot[n][0]);
            mat_acc(&mut l2[slot], pre * s2, &tot[n][1]);
        }
        let mut l3 = [ZERO_MAT; 4];
        for (slot, &(y, x)) in LEVEL3_PAIRS.iter().enumerate() {
            let c = level3_coefficients(mode, y, x);
            for s in 0..4 {
                mat_acc(&mut l3[slot], pre * c[s], &tot[n][2 + s]);
            }
        }
        level2.push(l2);
        level3.push(l3);
    }
    TreeMeans { times: times.to_vec(), level2, level3 }
}

/// Times a closure and wraps its value as a CSV-ready constant.
pub fn timed<F: FnOnce() -> f64>(
    label: ConstantLabel,
    i: usize,
    j: usize,
    epsilon: f64,
    k_max: i32,
    t: Option<f64>,
    f: F,
) -> RenormConstant {
    let start = Instant::now();
    let value = f();
    RenormConstant {
        label,
        i,
        j,
        epsilon,
        k_max,
        t,
        value,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_integral_limits() {
        let t = 0.3;
        let direct = (0..20000)
            .map(|n| {
                let s = (n as f64 + 0.5) * t / 20000.0;
                (-(2.0) * (t - s)).exp() * (-5.0 * s).exp()
            })
            .sum::<f64>()
            * t
            / 20000.0;
        assert!((mixed_integral(2.0, 5.0, t) - direct).abs() < 1e-8);
        assert!((mixed_integral(3.0, 3.0, t) - t * (-0.9f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn identical_mode_kills_level2_velocity() {
        let (s1, s2) = level2_coefficients(CorrelationMode::Identical, Kind::U, Kind::U);
        assert_eq!((s1, s2), (0.0, 0.0));
        let (s1, s2) = level2_coefficients(CorrelationMode::Independent, Kind::B, Kind::B);
        assert_eq!((s1, s2), (2.0, -2.0));
        let (s1, s2) = level2_coefficients(CorrelationMode::Independent, Kind::B, Kind::U);
        assert_eq!((s1, s2), (0.0, 0.0));
    }
}
