use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be at least 3, got {0}")]
    Dimension(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("time step {dt} violates the advective CFL limit {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("non-finite value at step {step}{location}")]
    NonFinite { step: usize, location: String },

    #[error("drift has no derivative information; {0} requires a differentiable drift")]
    NotDifferentiable(&'static str),

    #[error("epsilon search reached the floor {floor:e}; best L^d defect {achieved:e} > target {target:e}")]
    EpsilonSearch {
        floor: f64,
        achieved: f64,
        target: f64,
    },

    #[error("admissibility gate failed: {0}")]
    Gate(String),

    #[error("missing diagnostic: {0}")]
    MissingDiagnostic(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("hash mismatch for {path}: expected {expected}, found {found}")]
    HashMismatch {
        path: String,
        expected: String,
        found: String,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
