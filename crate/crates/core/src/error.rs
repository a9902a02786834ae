use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the offline/online pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("point {point:?} lies outside the domain")]
    PointOutsideDomain { point: Vec<f64> },

    #[error("non-finite nonlinear evaluation at quadrature point {point} (u = {value})")]
    NonFinite { point: usize, value: f64 },

    #[error("non-finite Taylor snapshot for pair ({k}, {k_prime}) at quadrature point {point}")]
    NonFiniteSnapshot {
        k: usize,
        k_prime: usize,
        point: usize,
    },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("Newton diverged after {iterations} iterations (residual history {history:?})")]
    NewtonDiverged {
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("time step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("snapshot (i = {i}, j = {j}) failed: {source}")]
    Snapshot {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("requested {requested} modes but numerical rank is {rank}")]
    RankExceeded { requested: usize, rank: usize },

    #[error("empirical interpolation stopped at {achieved} of {requested} functions (rank deficient)")]
    RankDeficient { requested: usize, achieved: usize },

    #[error("singular interpolation matrix (condition estimate {condition:e})")]
    SingularInterpolation { condition: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("corrupt array file {path}: {reason}")]
    CorruptArray { path: PathBuf, reason: String },

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
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
