use thiserror::Error;

/// Errors raised by the library. Every variant carries enough context to be
/// reported to a user without further lookup.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid transition kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid perturbation model: {0}")]
    InvalidModel(String),

    #[error("epsilon {epsilon} must satisfy 0 <= epsilon < min_e p0(e) = {min_prob} (kappa would be {kappa})")]
    EllipticityViolated { epsilon: f64, min_prob: f64, kappa: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),

    #[error("recurrent kernel; Green function diverges")]
    RecurrentKernel,

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("missing kernel values at points {0:?}")]
    MissingPoints(Vec<Vec<i64>>),

    #[error("tolerance {tol:e} not reached within budget (best bound {achieved:e})")]
    Budget { tol: f64, achieved: f64 },

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("torus has {states} states, above the configured cap of {cap}; use a smaller period")]
    TorusTooLarge { states: usize, cap: usize },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
