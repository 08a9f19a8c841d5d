//! Paracontrolled remainder `(u4, b4)`: the ansatz against the K fields, the
//! sharp right-hand sides and the Picard iteration of their mild form.
//!
//! Cross terms between level 1 and `Y = y3 + y4` are written in "Y first" form:
//! for a pairing `⊙`, `E_u^{ab} = w^a ⊙ X_u^b - c^a ⊙ X_b^b` and
//! `E_b^{ab} = w^a ⊙ X_b^b - c^a ⊙ X_u^b` with `Y = (w, c)`. The velocity bracket
//! receives `E_u + E_u^T`, the magnetic bracket `E_b^T - E_b`.

use std::sync::Arc;

use serde::Serialize;

use crate::besov::LpContext;
use crate::error::SolverError;
use crate::exponents::{validate_exponents, ExponentRecord};
use crate::mhd::{
    add_into, antisymmetrize, brackets_into, flux_of, samples, symmetrize, tensor_coeffs, zero_tensor, Tensor,
};
use crate::operators::{para_lt_into, para_res_into, product_into, BlockSamples};
use crate::spectral::{SpectralField, TorusGrid, C64};
use crate::tree::{gradient_blocks, vector_blocks, Path, Tree};

/// Pairing operation of a sharp-side term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Pairing {
    Low,
    High,
    Resonant,
    Product,
}

/// Objects entering a sharp-side term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Operand {
    Level1,
    Level2,
    Level3,
    Level4,
    /// `y3 + y4`
    Remainder,
    /// `L(y3 + y4)`
    HeatRemainder,
    /// `grad (y3 + y4)`
    GradRemainder,
    K,
    GradK,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhiTerm {
    pub pairing: Pairing,
    pub left: Operand,
    pub right: Operand,
    pub weight: f64,
}

const fn term(pairing: Pairing, left: Operand, right: Operand, weight: f64) -> PhiTerm {
    PhiTerm { pairing, left, right, weight }
}

/// Every term of the sharp right-hand sides. Terms whose right operand is
/// level 1, `K` or `grad K` enter through the cross combination; the rest
/// through the plain brackets.
pub const PHI_SHARP_TERMS: [PhiTerm; 9] = [
    term(Pairing::High, Operand::Remainder, Operand::Level1, 1.0),
    term(Pairing::Resonant, Operand::Level3, Operand::Level1, 1.0),
    term(Pairing::Resonant, Operand::Level4, Operand::Level1, 1.0),
    term(Pairing::Product, Operand::Level2, Operand::Level2, 1.0),
    term(Pairing::Product, Operand::Level2, Operand::Remainder, 1.0),
    term(Pairing::Product, Operand::Remainder, Operand::Level2, 1.0),
    term(Pairing::Product, Operand::Remainder, Operand::Remainder, 1.0),
    term(Pairing::Low, Operand::HeatRemainder, Operand::K, -1.0),
    term(Pairing::Low, Operand::GradRemainder, Operand::GradK, 2.0),
];

/// How `pi_0(y4, X)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum ResonantPath {
    /// Through the ansatz, the Leray/paraproduct commutator, the trilinear
    /// commutator and the `pi_0(grad K, X)` bundle objects.
    Commutator,
    /// Directly from the samples of `y4`.
    Raw,
}

/// Tree data at one node.
#[derive(Clone, Copy)]
pub struct TreeSlice<'a> {
    pub u1: &'a SpectralField,
    pub b1: &'a SpectralField,
    pub u2: &'a SpectralField,
    pub b2: &'a SpectralField,
    pub u3: &'a SpectralField,
    pub b3: &'a SpectralField,
    pub lu3: &'a SpectralField,
    pub lb3: &'a SpectralField,
    pub k_u: &'a SpectralField,
    pub k_b: &'a SpectralField,
}

impl Tree {
    pub fn slice(&self, m: usize) -> TreeSlice<'_> {
        TreeSlice {
            u1: &self.u1[m],
            b1: &self.b1[m],
            u2: &self.u2[m],
            b2: &self.b2[m],
            u3: &self.u3[m],
            b3: &self.b3[m],
            lu3: &self.rhs_u3[m],
            lb3: &self.rhs_b3[m],
            k_u: &self.k_u[m],
            k_b: &self.k_b[m],
        }
    }
}

/// Block samples of the tree objects at one node.
struct SliceBlocks {
    xu: Vec<BlockSamples>,
    xb: Vec<BlockSamples>,
    ku: Vec<BlockSamples>,
    kb: Vec<BlockSamples>,
    /// `d_{j1} K^a` at `3 a + j1`.
    dku: Vec<BlockSamples>,
    dkb: Vec<BlockSamples>,
}

impl SliceBlocks {
    fn new(ctx: &LpContext, s: &TreeSlice) -> Self {
        Self {
            xu: vector_blocks(ctx, s.u1),
            xb: vector_blocks(ctx, s.b1),
            ku: vector_blocks(ctx, s.k_u),
            kb: vector_blocks(ctx, s.k_b),
            dku: gradient_blocks(ctx, s.k_u),
            dkb: gradient_blocks(ctx, s.k_b),
        }
    }

    fn k(&self, kind: usize) -> &[BlockSamples] {
        if kind == 0 {
            &self.ku
        } else {
            &self.kb
        }
    }

    fn x(&self, kind: usize) -> &[BlockSamples] {
        if kind == 0 {
            &self.xu
        } else {
            &self.xb
        }
    }

    fn dk(&self, kind: usize) -> &[BlockSamples] {
        if kind == 0 {
            &self.dku
        } else {
            &self.dkb
        }
    }
}

fn pair_into(out: &mut [f64], s: f64, op: Pairing, f: &BlockSamples, g: &BlockSamples) {
    match op {
        Pairing::Low => para_lt_into(out, s, f, g),
        Pairing::High => para_lt_into(out, s, g, f),
        Pairing::Resonant => para_res_into(out, s, f, g),
        Pairing::Product => product_into(out, s, f.total(), g.total()),
    }
}

/// Adds `s` times the cross tensors `(E_u, E_b)` of `(w, c)` against `(x_u, x_b)`.
#[allow(clippy::too_many_arguments)]
fn cross_into(
    eu: &mut Tensor,
    eb: &mut Tensor,
    s: f64,
    op: Pairing,
    w: &[&BlockSamples],
    c: &[&BlockSamples],
    xu: &[&BlockSamples],
    xb: &[&BlockSamples],
) {
    for a in 0..3 {
        for b in 0..3 {
            let idx = 3 * a + b;
            pair_into(&mut eu[idx], s, op, w[a], xu[b]);
            pair_into(&mut eu[idx], -s, op, c[a], xb[b]);
            pair_into(&mut eb[idx], s, op, w[a], xb[b]);
            pair_into(&mut eb[idx], -s, op, c[a], xu[b]);
        }
    }
}

fn refs(v: &[BlockSamples]) -> Vec<&BlockSamples> {
    v.iter().collect()
}

/// `d_l v^a` for `a = 0..3` out of gradient blocks.
fn column(v: &[BlockSamples], l: usize) -> Vec<&BlockSamples> {
    (0..3).map(|a| &v[3 * a + l]).collect()
}

/// Applies the cross combinations and the divergence form.
fn close(grid: &Arc<TorusGrid>, eu: &Tensor, eb: &Tensor, bu: &Tensor, bb: &Tensor) -> (SpectralField, SpectralField) {
    let mut tu = symmetrize(eu);
    add_into(&mut tu, 1.0, bu);
    let mut tb = antisymmetrize(eb);
    add_into(&mut tb, 1.0, bb);
    (flux_of(grid, &tu), flux_of(grid, &tb))
}

fn ansatz_blocks(ctx: &LpContext, blocks: &SliceBlocks, w: &[BlockSamples], c: &[BlockSamples]) -> (SpectralField, SpectralField) {
    let points = ctx.grid.points();
    let mut eu = zero_tensor(points);
    let mut eb = zero_tensor(points);
    cross_into(&mut eu, &mut eb, 1.0, Pairing::Low, &refs(w), &refs(c), &refs(&blocks.ku), &refs(&blocks.kb));
    let z = zero_tensor(points);
    close(&ctx.grid, &eu, &eb, &z, &z)
}

/// Paraproduct part of the ansatz, `y4 - y_sharp`, for the remainder `Y = (w, c)`.
pub fn ansatz(ctx: &LpContext, slice: &TreeSlice, w: &SpectralField, c: &SpectralField) -> (SpectralField, SpectralField) {
    let blocks = SliceBlocks::new(ctx, slice);
    ansatz_blocks(ctx, &blocks, &vector_blocks(ctx, w), &vector_blocks(ctx, c))
}

fn sum(a: &SpectralField, b: &SpectralField) -> SpectralField {
    a.add(b).expect("same grid")
}

fn rel_diff(a: &SpectralField, b: &SpectralField) -> f64 {
    let d = a.sub(b).expect("same grid").max_abs();
    let s = a.max_abs().max(b.max_abs());
    if s == 0.0 {
        0.0
    } else {
        d / s
    }
}

/// Solves `y4 = A(y3 + y4) + y_sharp` by fixed-point iteration from `guess`.
/// Returns `(u4, b4, residual)`.
#[allow(clippy::too_many_arguments)]
fn solve_ansatz_blocks(
    ctx: &LpContext,
    slice: &TreeSlice,
    blocks: &SliceBlocks,
    u_sharp: &SpectralField,
    b_sharp: &SpectralField,
    guess: (&SpectralField, &SpectralField),
    tol: f64,
    max_iter: usize,
) -> (SpectralField, SpectralField, f64) {
    let (mut u4, mut b4) = (guess.0.clone(), guess.1.clone());
    let mut res = f64::INFINITY;
    for _ in 0..max_iter {
        let w = vector_blocks(ctx, &sum(slice.u3, &u4));
        let c = vector_blocks(ctx, &sum(slice.b3, &b4));
        let (au, ab) = ansatz_blocks(ctx, blocks, &w, &c);
        let (nu, nb) = (sum(&au, u_sharp), sum(&ab, b_sharp));
        res = rel_diff(&nu, &u4).max(rel_diff(&nb, &b4));
        u4 = nu;
        b4 = nb;
        if res <= tol {
            break;
        }
    }
    (u4, b4, res)
}

pub fn solve_ansatz(
    ctx: &LpContext,
    slice: &TreeSlice,
    u_sharp: &SpectralField,
    b_sharp: &SpectralField,
    tol: f64,
    max_iter: usize,
) -> (SpectralField, SpectralField, f64) {
    let blocks = SliceBlocks::new(ctx, slice);
    solve_ansatz_blocks(ctx, slice, &blocks, u_sharp, b_sharp, (u_sharp, b_sharp), tol, max_iter)
}

/// Relative defect of `y4 = A(y3 + y4) + y_sharp`.
pub fn ansatz_residual(
    ctx: &LpContext,
    slice: &TreeSlice,
    u4: &SpectralField,
    b4: &SpectralField,
    u_sharp: &SpectralField,
    b_sharp: &SpectralField,
) -> f64 {
    let (au, ab) = ansatz(ctx, slice, &sum(slice.u3, u4), &sum(slice.b3, b4));
    rel_diff(&sum(&au, u_sharp), u4).max(rel_diff(&sum(&ab, b_sharp), b4))
}

/// Leray projection of a vector given by physical samples.
fn leray(grid: &Arc<TorusGrid>, v: &[Vec<f64>]) -> SpectralField {
    vector_from_samples(grid, v).project_divergence_free().expect("three components")
}

fn vector_from_samples(grid: &Arc<TorusGrid>, v: &[Vec<f64>]) -> SpectralField {
    let refs: Vec<&[f64]> = v.iter().map(|x| x.as_slice()).collect();
    SpectralField::from_components(grid, grid.analyze_many(&refs))
}

/// `pi_0(y4^a, X^b)` for `y4 in {u4, b4}` and `X in {u1, b1}`, ordered
/// `[(u4, u1), (u4, b1), (b4, u1), (b4, b1)]`.
///
/// The commutator path expands `y4 = A(Y) + y_sharp`. With `div K = div Y = 0`,
/// `A^a = -1/2 P^{a i1} [sum_{j1} pi_<(Y^{j1}, d_{j1} K^{i1}) + pi_<(d_{j1} Y^{i1}, K^{j1})]`.
/// The first family is split as `pi_0(P pi_<(f, h), X) = pi_0([P, pi_<](f, h), X)
/// + C(f, h, X) + f pi_0(h, X)`, the last factor being the bundle object
/// `pi_0(d_{j1} K^a, X^b)`. The second family is regular and paired directly.
#[allow(clippy::too_many_arguments)]
fn level4_resonances(
    ctx: &LpContext,
    blocks: &SliceBlocks,
    path: ResonantPath,
    w: &[BlockSamples],
    c: &[BlockSamples],
    u4: &SpectralField,
    b4: &SpectralField,
    u_sharp: &SpectralField,
    b_sharp: &SpectralField,
) -> Vec<Tensor> {
    let grid = &ctx.grid;
    let points = grid.points();
    let mut out = vec![zero_tensor(points); 4];
    if path == ResonantPath::Raw {
        for (yk, y) in [u4, b4].into_iter().enumerate() {
            let yb = vector_blocks(ctx, y);
            for xk in 0..2 {
                let x = blocks.x(xk);
                for a in 0..3 {
                    for b in 0..3 {
                        para_res_into(&mut out[2 * yk + xk][3 * a + b], 1.0, &yb[a], &x[b]);
                    }
                }
            }
        }
        return out;
    }
    // slot[kk][xk]: pi_0(d_{j1} K^a, X^b) at 9 a + 3 j1 + b
    let slot: Vec<Vec<Vec<Vec<f64>>>> = (0..2)
        .map(|kk| {
            (0..2)
                .map(|xk| {
                    let mut s = vec![vec![0.0; points]; 27];
                    for a in 0..3 {
                        for j1 in 0..3 {
                            for b in 0..3 {
                                para_res_into(&mut s[9 * a + 3 * j1 + b], 1.0, &blocks.dk(kk)[3 * a + j1], &blocks.x(xk)[b]);
                            }
                        }
                    }
                    s
                })
                .collect()
        })
        .collect();
    let y = [w, c];
    // Pairs (sign, remainder kind, K kind) of the singular and regular families.
    let singular: [[(f64, usize, usize); 2]; 2] = [[(1.0, 0, 0), (-1.0, 1, 1)], [(1.0, 0, 1), (-1.0, 1, 0)]];
    let regular: [[(f64, usize, usize); 2]; 2] = [[(1.0, 0, 0), (-1.0, 1, 1)], [(-1.0, 0, 1), (1.0, 1, 0)]];
    let grad_y: Vec<Vec<BlockSamples>> = [w, c]
        .iter()
        .map(|v| {
            let f = SpectralField::from_components(grid, v.iter().map(|b| grid.analyze(b.total())).collect());
            gradient_blocks(ctx, &f)
        })
        .collect();
    for yk in 0..2 {
        let mut f2 = vec![vec![0.0; points]; 3];
        let mut f1 = vec![vec![0.0; points]; 3];
        for (s, rk, kk) in singular[yk] {
            for j1 in 0..3 {
                for i1 in 0..3 {
                    para_lt_into(&mut f2[i1], s, &y[rk][j1], &blocks.dk(kk)[3 * i1 + j1]);
                }
            }
        }
        for (s, rk, kk) in regular[yk] {
            for j1 in 0..3 {
                for i1 in 0..3 {
                    para_lt_into(&mut f1[i1], s, &grad_y[rk][3 * i1 + j1], &blocks.k(kk)[j1]);
                }
            }
        }
        let pf2 = leray(grid, &f2);
        let f2_field = vector_from_samples(grid, &f2);
        let commutator = pf2.sub(&f2_field).expect("same grid");
        let pf1 = leray(grid, &f1);
        let comm_blocks = vector_blocks(ctx, &commutator);
        let f2_blocks = vector_blocks(ctx, &f2_field);
        let pf1_blocks = vector_blocks(ctx, &pf1);
        let sharp_blocks = vector_blocks(ctx, if yk == 0 { u_sharp } else { b_sharp });
        for xk in 0..2 {
            let x = blocks.x(xk);
            let t = &mut out[2 * yk + xk];
            for a in 0..3 {
                for b in 0..3 {
                    let o = &mut t[3 * a + b];
                    // Leray commutator piece
                    para_res_into(o, -0.5, &comm_blocks[a], &x[b]);
                    // trilinear commutator: pi_0(pi_<(f, h), X) - f pi_0(h, X)
                    para_res_into(o, -0.5, &f2_blocks[a], &x[b]);
                    for (s, rk, kk) in singular[yk] {
                        for j1 in 0..3 {
                            product_into(o, 0.5 * s, y[rk][j1].total(), &slot[kk][xk][9 * a + 3 * j1 + b]);
                        }
                    }
                    // f pi_0(d K, X) through the bundle object
                    for (s, rk, kk) in singular[yk] {
                        for j1 in 0..3 {
                            product_into(o, -0.5 * s, y[rk][j1].total(), &slot[kk][xk][9 * a + 3 * j1 + b]);
                        }
                    }
                    para_res_into(o, -0.5, &pf1_blocks[a], &x[b]);
                    para_res_into(o, 1.0, &sharp_blocks[a], &x[b]);
                }
            }
        }
    }
    out
}

/// Remainder fields and levels at one node needed for the sharp right-hand side.
pub struct SharpInput<'a> {
    pub u4: &'a SpectralField,
    pub b4: &'a SpectralField,
    pub u_sharp: &'a SpectralField,
    pub b_sharp: &'a SpectralField,
}

fn phi_sharp_blocks(
    ctx: &LpContext,
    slice: &TreeSlice,
    blocks: &SliceBlocks,
    state: &SharpInput,
    path: ResonantPath,
) -> (SpectralField, SpectralField) {
    let grid = &ctx.grid;
    let points = grid.points();
    let w = sum(slice.u3, state.u4);
    let c = sum(slice.b3, state.b4);
    let (sw, sc) = (samples(&w), samples(&c));
    let (s1u, s1b) = (samples(slice.u1), samples(slice.b1));
    let (s2u, s2b) = (samples(slice.u2), samples(slice.b2));
    // L(y4) is the full level-4 nonlinearity.
    let mut nu = zero_tensor(points);
    let mut nb = zero_tensor(points);
    brackets_into(&mut nu, &mut nb, 1.0, &s1u, &s1b, &sw, &sc);
    brackets_into(&mut nu, &mut nb, 1.0, &sw, &sc, &s1u, &s1b);
    brackets_into(&mut nu, &mut nb, 1.0, &s2u, &s2b, &s2u, &s2b);
    brackets_into(&mut nu, &mut nb, 1.0, &s2u, &s2b, &sw, &sc);
    brackets_into(&mut nu, &mut nb, 1.0, &sw, &sc, &s2u, &s2b);
    brackets_into(&mut nu, &mut nb, 1.0, &sw, &sc, &sw, &sc);
    let lw = sum(slice.lu3, &flux_of(grid, &nu));
    let lc = sum(slice.lb3, &flux_of(grid, &nb));

    let wb = vector_blocks(ctx, &w);
    let cb = vector_blocks(ctx, &c);
    let u3b = vector_blocks(ctx, slice.u3);
    let b3b = vector_blocks(ctx, slice.b3);
    let lwb = vector_blocks(ctx, &lw);
    let lcb = vector_blocks(ctx, &lc);
    let gw = gradient_blocks(ctx, &w);
    let gc = gradient_blocks(ctx, &c);
    let r4 = level4_resonances(ctx, blocks, path, &wb, &cb, state.u4, state.b4, state.u_sharp, state.b_sharp);

    let mut eu = zero_tensor(points);
    let mut eb = zero_tensor(points);
    let mut bu = zero_tensor(points);
    let mut bb = zero_tensor(points);
    let x = (refs(&blocks.xu), refs(&blocks.xb));
    for t in PHI_SHARP_TERMS {
        let s = t.weight;
        match (t.pairing, t.left, t.right) {
            (Pairing::High, Operand::Remainder, Operand::Level1) => {
                cross_into(&mut eu, &mut eb, s, Pairing::High, &refs(&wb), &refs(&cb), &x.0, &x.1)
            }
            // mode-0 constants of the renormalized products drop under the divergence
            (Pairing::Resonant, Operand::Level3, Operand::Level1) => {
                cross_into(&mut eu, &mut eb, s, Pairing::Resonant, &refs(&u3b), &refs(&b3b), &x.0, &x.1)
            }
            (Pairing::Resonant, Operand::Level4, Operand::Level1) => {
                add_into(&mut eu, s, &r4[0]);
                add_into(&mut eu, -s, &r4[3]);
                add_into(&mut eb, s, &r4[1]);
                add_into(&mut eb, -s, &r4[2]);
            }
            (Pairing::Product, l, r) => {
                let pick = |o: Operand| match o {
                    Operand::Level2 => (&s2u, &s2b),
                    _ => (&sw, &sc),
                };
                let (pu, pb) = pick(l);
                let (qu, qb) = pick(r);
                brackets_into(&mut bu, &mut bb, s, pu, pb, qu, qb);
            }
            (Pairing::Low, Operand::HeatRemainder, Operand::K) => cross_into(
                &mut eu,
                &mut eb,
                s,
                Pairing::Low,
                &refs(&lwb),
                &refs(&lcb),
                &refs(&blocks.ku),
                &refs(&blocks.kb),
            ),
            (Pairing::Low, Operand::GradRemainder, Operand::GradK) => {
                for l in 0..3 {
                    cross_into(
                        &mut eu,
                        &mut eb,
                        s,
                        Pairing::Low,
                        &column(&gw, l),
                        &column(&gc, l),
                        &column(&blocks.dku, l),
                        &column(&blocks.dkb, l),
                    );
                }
            }
            other => unreachable!("term {other:?} not in the sharp list"),
        }
    }
    close(grid, &eu, &eb, &bu, &bb)
}

/// Sharp right-hand sides `(phi_u, phi_b)` at one node.
pub fn phi_sharp(ctx: &LpContext, slice: &TreeSlice, state: &SharpInput, path: ResonantPath) -> (SpectralField, SpectralField) {
    let blocks = SliceBlocks::new(ctx, slice);
    phi_sharp_blocks(ctx, slice, &blocks, state, path)
}

/// `pi_0(y4^a, X^b)` along both paths, for comparing them.
pub fn level4_resonance_paths(
    ctx: &LpContext,
    slice: &TreeSlice,
    state: &SharpInput,
) -> (Vec<Vec<Vec<C64>>>, Vec<Vec<Vec<C64>>>) {
    let blocks = SliceBlocks::new(ctx, slice);
    let w = vector_blocks(ctx, &sum(slice.u3, state.u4));
    let c = vector_blocks(ctx, &sum(slice.b3, state.b4));
    let eval = |p| {
        level4_resonances(ctx, &blocks, p, &w, &c, state.u4, state.b4, state.u_sharp, state.b_sharp)
            .iter()
            .map(|t| tensor_coeffs(&ctx.grid, t))
            .collect()
    };
    (eval(ResonantPath::Commutator), eval(ResonantPath::Raw))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PicardSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation applied once successive changes stop decreasing.
    pub relaxation: f64,
    pub ansatz_tol: f64,
    pub ansatz_max_iter: usize,
    pub resonant: ResonantPath,
    pub exponents: ExponentRecord,
}

impl Default for PicardSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 60,
            relaxation: 0.5,
            ansatz_tol: 1e-13,
            ansatz_max_iter: 60,
            resonant: ResonantPath::Commutator,
            exponents: ExponentRecord::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParacontrolledState {
    pub times: Vec<f64>,
    pub u_sharp: Path,
    pub b_sharp: Path,
    pub u4: Path,
    pub b4: Path,
    pub exponents: ExponentRecord,
    /// Rough weighted norm of `y4` per iteration.
    pub weighted_norm_history: Vec<f64>,
    /// Relative change of the sharp path per iteration.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub relaxed: bool,
    /// Largest ansatz defect over the stored times.
    pub ansatz_residual: f64,
    pub divergence_free: bool,
    pub mean_zero: bool,
}

/// Weighted remainder norms `sup_t t^{(1/2 - delta0 + z)/2} ||y4||_{C^{1/2 - delta0}}`
/// and `sup_t t^{(1/2 + beta + z)/2} ||y4||_{C^{1/2 + beta}}`.
pub fn weighted_norms(ctx: &LpContext, times: &[f64], u: &[SpectralField], b: &[SpectralField], e: &ExponentRecord) -> (f64, f64) {
    let mut rough: f64 = 0.0;
    let mut smooth: f64 = 0.0;
    for ((t, u), b) in times.iter().zip(u).zip(b) {
        if *t <= 0.0 {
            continue;
        }
        let comps: Vec<&[C64]> = (0..3).map(|c| u.comp(c)).chain((0..3).map(|c| b.comp(c))).collect();
        let r = ctx.holder_norms(&comps, 0.5 - e.delta0).into_iter().fold(0.0, f64::max);
        let s = ctx.holder_norms(&comps, 0.5 + e.beta).into_iter().fold(0.0, f64::max);
        rough = rough.max(t.powf(e.rough_weight()) * r);
        smooth = smooth.max(t.powf(e.smooth_weight()) * s);
    }
    (rough, smooth)
}

fn path_change(ctx: &LpContext, times: &[f64], new: (&Path, &Path), old: (&Path, &Path), e: &ExponentRecord) -> f64 {
    let du: Path = new.0.iter().zip(old.0).map(|(a, b)| a.sub(b).expect("same grid")).collect();
    let db: Path = new.1.iter().zip(old.1).map(|(a, b)| a.sub(b).expect("same grid")).collect();
    let (d, _) = weighted_norms(ctx, times, &du, &db, e);
    let (n, _) = weighted_norms(ctx, times, new.0, new.1, e);
    if n == 0.0 {
        d
    } else {
        d / n
    }
}

/// Picard iteration of the mild sharp equations on the tree's time grid.
pub fn picard_solve(
    ctx: &LpContext,
    tree: &Tree,
    u0: &SpectralField,
    b0: &SpectralField,
    settings: &PicardSettings,
) -> Result<ParacontrolledState, SolverError> {
    let bad = validate_exponents(&settings.exponents);
    if !bad.is_empty() {
        return Err(SolverError::Exponents(bad));
    }
    let times = &tree.times;
    if times[0] != 0.0 {
        return Err(SolverError::BadTimeGrid);
    }
    let nt = times.len();
    let us0 = u0.project_divergence_free()?.project_mean_zero().sub(&tree.u1[0])?;
    let bs0 = b0.project_divergence_free()?.project_mean_zero().sub(&tree.b1[0])?;
    let zero = SpectralField::zeros(&tree.grid, 3);
    let mut u_sharp = crate::tree::duhamel(&us0, &vec![zero.clone(); nt - 1], times)?;
    let mut b_sharp = crate::tree::duhamel(&bs0, &vec![zero.clone(); nt - 1], times)?;
    let mut u4 = u_sharp.clone();
    let mut b4 = b_sharp.clone();
    let mut residuals = Vec::new();
    let mut weighted = Vec::new();
    let mut theta = 1.0;
    let mut relaxed = false;
    let blocks: Vec<SliceBlocks> = (0..nt).map(|m| SliceBlocks::new(ctx, &tree.slice(m))).collect();
    for it in 1..=settings.max_iter {
        let mut phi_u = Vec::with_capacity(nt - 1);
        let mut phi_b = Vec::with_capacity(nt - 1);
        for m in 0..nt {
            let slice = tree.slice(m);
            let (nu, nb, _) = solve_ansatz_blocks(
                ctx,
                &slice,
                &blocks[m],
                &u_sharp[m],
                &b_sharp[m],
                (&u4[m], &b4[m]),
                settings.ansatz_tol,
                settings.ansatz_max_iter,
            );
            u4[m] = nu;
            b4[m] = nb;
            if m + 1 < nt {
                let input = SharpInput { u4: &u4[m], b4: &b4[m], u_sharp: &u_sharp[m], b_sharp: &b_sharp[m] };
                let (pu, pb) = phi_sharp_blocks(ctx, &slice, &blocks[m], &input, settings.resonant);
                phi_u.push(pu);
                phi_b.push(pb);
            }
        }
        weighted.push(weighted_norms(ctx, times, &u4, &b4, &settings.exponents).0);
        let mut nu = crate::tree::duhamel(&us0, &phi_u, times)?;
        let mut nb = crate::tree::duhamel(&bs0, &phi_b, times)?;
        if theta < 1.0 {
            for m in 0..nt {
                nu[m] = nu[m].scaled(theta).add(&u_sharp[m].scaled(1.0 - theta))?;
                nb[m] = nb[m].scaled(theta).add(&b_sharp[m].scaled(1.0 - theta))?;
            }
        }
        let change = path_change(ctx, times, (&nu, &nb), (&u_sharp, &b_sharp), &settings.exponents);
        u_sharp = nu;
        b_sharp = nb;
        if let Some(&prev) = residuals.last() {
            if change > prev && !relaxed {
                relaxed = true;
                theta = settings.relaxation;
            }
        }
        residuals.push(change);
        if change < settings.tol {
            let mut worst: f64 = 0.0;
            for m in 0..nt {
                let slice = tree.slice(m);
                let (au, ab, _) = solve_ansatz_blocks(
                    ctx,
                    &slice,
                    &blocks[m],
                    &u_sharp[m],
                    &b_sharp[m],
                    (&u4[m], &b4[m]),
                    settings.ansatz_tol,
                    settings.ansatz_max_iter,
                );
                u4[m] = au;
                b4[m] = ab;
                worst = worst.max(ansatz_residual(ctx, &slice, &u4[m], &b4[m], &u_sharp[m], &b_sharp[m]));
            }
            weighted.push(weighted_norms(ctx, times, &u4, &b4, &settings.exponents).0);
            let scale = u4.iter().chain(&b4).map(|f| f.max_abs()).fold(0.0, f64::max).max(1e-300);
            let divergence_free = u4.iter().chain(&b4).all(|f| f.divergence_residual() <= 1e-10 * scale);
            let mean_zero = u4.iter().chain(&b4).all(|f| f.is_mean_zero());
            return Ok(ParacontrolledState {
                times: times.clone(),
                u_sharp,
                b_sharp,
                u4,
                b4,
                exponents: settings.exponents,
                weighted_norm_history: weighted,
                residual_history: residuals,
                iterations: it,
                relaxed,
                ansatz_residual: worst,
                divergence_free,
                mean_zero,
            });
        }
    }
    Err(SolverError::NoConvergence {
        iterations: settings.max_iter,
        last_change: residuals.last().copied().unwrap_or(f64::NAN),
        history: weighted,
    })
}

/// Solver report written by the fixed-point experiment.
#[derive(Debug, Clone, Serialize)]
pub struct SolverReport {
    pub exponents: ExponentRecord,
    pub t_final: f64,
    pub iterations: usize,
    pub relaxed: bool,
    pub residual_history: Vec<f64>,
    pub weighted_norm_history: Vec<f64>,
    pub weighted_rough: f64,
    pub weighted_smooth: f64,
    pub ansatz_residual: f64,
    /// `C^{-z}` norms at the final time of `y1`, `y2`, `y3`, `y4` and their sum.
    pub final_norms: [f64; 5],
}

impl SolverReport {
    pub fn new(ctx: &LpContext, tree: &Tree, state: &ParacontrolledState) -> Self {
        let e = state.exponents;
        let (rough, smooth) = weighted_norms(ctx, &state.times, &state.u4, &state.b4, &e);
        let m = state.times.len() - 1;
        let pair_norm = |u: &SpectralField, b: &SpectralField| {
            let comps: Vec<&[C64]> = (0..3).map(|c| u.comp(c)).chain((0..3).map(|c| b.comp(c))).collect();
            ctx.holder_norms(&comps, -e.z).into_iter().fold(0.0, f64::max)
        };
        let (su, sb) = total_solution(tree, state, m);
        Self {
            exponents: e,
            t_final: state.times[m],
            iterations: state.iterations,
            relaxed: state.relaxed,
            residual_history: state.residual_history.clone(),
            weighted_norm_history: state.weighted_norm_history.clone(),
            weighted_rough: rough,
            weighted_smooth: smooth,
            ansatz_residual: state.ansatz_residual,
            final_norms: [
                pair_norm(&tree.u1[m], &tree.b1[m]),
                pair_norm(&tree.u2[m], &tree.b2[m]),
                pair_norm(&tree.u3[m], &tree.b3[m]),
                pair_norm(&state.u4[m], &state.b4[m]),
                pair_norm(&su, &sb),
            ],
        }
    }
}

/// `y1 + y2 + y3 + y4` at node `m`.
pub fn total_solution(tree: &Tree, state: &ParacontrolledState, m: usize) -> (SpectralField, SpectralField) {
    let u = sum(&sum(&sum(&tree.u1[m], &tree.u2[m]), &tree.u3[m]), &state.u4[m]);
    let b = sum(&sum(&sum(&tree.b1[m], &tree.b2[m]), &tree.b3[m]), &state.b4[m]);
    (u, b)
}

/// `pi_<` terms of the sharp list pairing a remainder object with level 1.
pub fn forbidden_low_terms() -> Vec<PhiTerm> {
    PHI_SHARP_TERMS
        .iter()
        .filter(|t| {
            t.pairing == Pairing::Low
                && matches!(
                    t.left,
                    Operand::Level3 | Operand::Level4 | Operand::Remainder | Operand::HeatRemainder | Operand::GradRemainder
                )
                && t.right == Operand::Level1
        })
        .copied()
        .collect()
}
