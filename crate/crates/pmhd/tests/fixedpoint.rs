use pmhd::besov::LpContext;
use pmhd::direct::{random_solenoidal, solve, Forcing, StepperConfig};
use pmhd::error::SolverError;
use pmhd::experiments::pair_holder_norm;
use pmhd::exponents::ExponentRecord;
use pmhd::noise::{sample_driver_path, uniform_time_grid, CorrelationMode, GaussianDriverPath, MollifierCutoff};
use pmhd::paracontrolled::{
    forbidden_low_terms, level4_resonance_paths, picard_solve, total_solution, Operand, Pairing, PicardSettings,
    ResonantPath, SharpInput, PHI_SHARP_TERMS,
};
use pmhd::spectral::{SpectralField, TorusGrid};
use pmhd::tree::{build_tree, Tree, TreeConstants};

struct Setup {
    ctx: LpContext,
    path: GaussianDriverPath,
    tree: Tree,
    u0: SpectralField,
    b0: SpectralField,
}

fn setup(n: usize, eps: f64, t: f64, steps: usize, noise: bool, amp: f64) -> Setup {
    let grid = TorusGrid::new(n).unwrap();
    let ctx = LpContext::new(&grid);
    let cutoff = MollifierCutoff::new(eps).unwrap();
    let times = uniform_time_grid(t, steps);
    let mode = CorrelationMode::Identical;
    let mut path = sample_driver_path(&grid, cutoff, &times, 1, 0, mode).unwrap();
    let consts = if noise {
        TreeConstants::compute(&cutoff, grid.k_max(), mode)
    } else {
        path = path.zeros_like();
        TreeConstants::zero(eps)
    };
    let tree = build_tree(&path, &consts).unwrap();
    let u0 = random_solenoidal(&grid, 2, 4.0).scaled(amp);
    let b0 = random_solenoidal(&grid, 3, 4.0).scaled(amp);
    Setup { ctx, path, tree, u0, b0 }
}

fn rel_error(s: &Setup, settings: &PicardSettings, forcing: &mut Forcing) -> f64 {
    let state = picard_solve(&s.ctx, &s.tree, &s.u0, &s.b0, settings).unwrap();
    let direct = solve(&s.u0, &s.b0, &s.tree.times, forcing, &StepperConfig::default()).unwrap();
    let m = s.tree.times.len() - 1;
    let (u, b) = total_solution(&s.tree, &state, m);
    let z = settings.exponents.z;
    pair_holder_norm(&s.ctx, &u.sub(&direct.u[m]).unwrap(), &b.sub(&direct.b[m]).unwrap(), -z)
        / pair_holder_norm(&s.ctx, &direct.u[m], &direct.b[m], -z)
}

#[test]
fn zero_everything_converges_at_once() {
    let s = setup(8, 0.5, 0.05, 10, false, 0.0);
    let state = picard_solve(&s.ctx, &s.tree, &s.u0, &s.b0, &PicardSettings::default()).unwrap();
    assert_eq!(state.iterations, 1);
    assert!(state.u4.iter().chain(&state.b4).all(|f| f.max_abs() == 0.0));
}

#[test]
fn noiseless_remainder_matches_direct_solver() {
    let s = setup(16, 0.5, 0.05, 50, false, 0.3);
    let rel = rel_error(&s, &PicardSettings::default(), &mut Forcing::None);
    assert!(rel <= 1e-6, "relative error {rel}");
}

#[test]
fn expansion_matches_mollified_direct_solve() {
    let s = setup(8, 0.5, 0.05, 20, true, 0.3);
    let rel = rel_error(&s, &PicardSettings::default(), &mut Forcing::Path(&s.path));
    assert!(rel <= 1e-3, "relative error {rel}");
}

#[test]
fn converged_state_is_consistent() {
    let s = setup(8, 0.5, 0.05, 20, true, 0.3);
    let settings = PicardSettings::default();
    let state = picard_solve(&s.ctx, &s.tree, &s.u0, &s.b0, &settings).unwrap();
    assert!(state.ansatz_residual <= 10.0 * settings.tol, "ansatz residual {}", state.ansatz_residual);
    assert!(state.divergence_free && state.mean_zero);
    assert_eq!(state.residual_history.len(), state.iterations);
    let h = &state.residual_history;
    let ratios: Vec<f64> = h.windows(2).filter(|w| w[0] > 1e-13).map(|w| w[1] / w[0]).collect();
    assert!(!ratios.is_empty());
    assert!(ratios.iter().all(|r| *r < 1.0), "ratios {ratios:?}");
}

#[test]
fn resonant_paths_agree() {
    let s = setup(8, 0.5, 0.05, 10, true, 0.3);
    let mut settings = PicardSettings::default();
    let state = picard_solve(&s.ctx, &s.tree, &s.u0, &s.b0, &settings).unwrap();
    let m = 5;
    let input = SharpInput { u4: &state.u4[m], b4: &state.b4[m], u_sharp: &state.u_sharp[m], b_sharp: &state.b_sharp[m] };
    let (comm, raw) = level4_resonance_paths(&s.ctx, &s.tree.slice(m), &input);
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (a, b) in comm.iter().flatten().flatten().zip(raw.iter().flatten().flatten()) {
        diff = diff.max((a - b).norm());
        scale = scale.max(b.norm());
    }
    assert!(scale > 0.0);
    assert!(diff <= 1e-8 * scale, "{diff} vs {scale}");

    settings.resonant = ResonantPath::Raw;
    let other = picard_solve(&s.ctx, &s.tree, &s.u0, &s.b0, &settings).unwrap();
    let last = s.tree.times.len() - 1;
    let (u, b) = total_solution(&s.tree, &state, last);
    let (u2, b2) = total_solution(&s.tree, &other, last);
    let d = u.sub(&u2).unwrap().max_abs().max(b.sub(&b2).unwrap().max_abs());
    assert!(d <= 1e-8 * u.max_abs().max(b.max_abs()), "{d}");
}

#[test]
fn low_pairings_with_level1_are_never_built() {
    assert!(forbidden_low_terms().is_empty());
    for t in PHI_SHARP_TERMS {
        if t.pairing == Pairing::Low {
            assert!(matches!(t.right, Operand::K | Operand::GradK));
        }
    }
}

#[test]
fn bad_exponents_are_rejected() {
    let s = setup(8, 0.5, 0.05, 4, false, 0.1);
    let settings = PicardSettings { exponents: ExponentRecord { beta: 0.0, ..ExponentRecord::default() }, ..PicardSettings::default() };
    match picard_solve(&s.ctx, &s.tree, &s.u0, &s.b0, &settings) {
        Err(SolverError::Exponents(v)) => assert!(!v.is_empty()),
        other => panic!("expected exponent error, got {:?}", other.map(|s| s.iterations)),
    }
}
