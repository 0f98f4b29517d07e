use thiserror::Error;

/// Errors produced anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("case file: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid case: {0}")]
    InvalidCase(String),

    #[error("duplicate bus id {0}")]
    DuplicateBus(usize),

    #[error("bus ids must form 1..{expected}; missing id {missing}")]
    NonContiguousIds { expected: usize, missing: usize },

    #[error("zero reactance on line ({from},{to})")]
    ZeroReactance { from: usize, to: usize },

    #[error("negative reactance on line ({from},{to})")]
    NegativeReactance { from: usize, to: usize },

    #[error("negative resistance on line ({from},{to})")]
    NegativeResistance { from: usize, to: usize },

    #[error("line {index} connects unknown bus {bus}")]
    UnknownBus { index: usize, bus: usize },

    #[error("line {index} is a self loop on bus {bus}")]
    SelfLoop { index: usize, bus: usize },

    #[error("no slack bus")]
    NoSlack,

    #[error("more than one slack bus (buses {0} and {1})")]
    MultipleSlack(usize, usize),

    #[error("grid is disconnected: bus {0} is unreachable from bus 1")]
    Disconnected(usize),

    #[error("Laplacian part {part} has positive off-diagonal {value:e} at ({row},{col})")]
    PositiveOffDiagonal {
        part: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("power flow did not converge in {iterations} iterations (mismatch {mismatch:e})")]
    NotConverged { iterations: usize, mismatch: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("cutoff search failed for historic state {state}: last coefficient energy {energy:e} exceeds epsilon {epsilon:e}")]
    CutoffExceedsSpectrum {
        state: usize,
        energy: f64,
        epsilon: f64,
    },

    #[error("eigenvalue tie at {lambda:e} carries conflicting filter responses")]
    ConflictingTie { lambda: f64 },

    #[error("invalid attack: {0}")]
    InvalidAttack(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("scenario re-draw cap of {cap} exceeded with {found} of {wanted} states")]
    RedrawCapExceeded {
        cap: usize,
        found: usize,
        wanted: usize,
    },

    #[error("threshold bisection did not converge: {0}")]
    Bisection(String),

    #[error("unsupported model format version {0}")]
    ModelVersion(u32),
}

pub type Result<T> = std::result::Result<T, Error>;
