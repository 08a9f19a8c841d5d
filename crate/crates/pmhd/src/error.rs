use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid size {0} must be even and at least 4")]
    BadSize(usize),
    #[error("dealias fraction {0} must lie in (0, 1]")]
    BadFraction(f64),
    #[error("no retained modes for n = {n} under dealias fraction {fraction}")]
    EmptyLattice { n: usize, fraction: f64 },
    #[error("k_max must be positive, got {0}")]
    BadKmax(i32),
}

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("component arity mismatch: expected {expected}, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("reality invariant violated: imaginary part {imag:e} relative to scale {scale:e}")]
    NotReal { imag: f64, scale: f64 },
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("block index {j} outside [-1, {j_max}]")]
    BlockRange { j: i32, j_max: i32 },
}

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("mollification scale must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("time grid must be strictly increasing")]
    UnsortedTimes,
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
}

#[derive(Debug, Error)]
pub enum WickError {
    #[error("wick products of degree {0} are not supported (1..=4)")]
    Degree(usize),
    #[error("at least 100 Monte Carlo samples required, got {0}")]
    TooFewSamples(usize),
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("time grid must start at 0 and be strictly increasing")]
    BadTimeGrid,
    #[error("time step {dt} exceeds stability bound {bound}")]
    Cfl { dt: f64, bound: f64 },
    #[error("driver path and tree use different mollification scales ({driver} vs {constants})")]
    EpsilonMismatch { driver: f64, constants: f64 },
    #[error("picard iteration did not converge in {iterations} steps; last change {last_change:e}")]
    NoConvergence { iterations: usize, last_change: f64, history: Vec<f64> },
    #[error("exponent record rejected: {0:?}")]
    Exponents(Vec<String>),
    #[error("missing bundle slot {0}")]
    MissingSlot(String),
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic, expected PMHD1")]
    Magic,
    #[error("malformed snapshot: {0}")]
    Malformed(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Wick(#[from] WickError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("numerical failure: {message}")]
    Numerical { message: String, report: serde_json::Value },
}
