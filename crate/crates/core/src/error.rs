use thiserror::Error;

/// Errors surfaced by the numeric substrate, the transport solvers and the
/// training harness.
#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("dimension mismatch in {context}: {lhs} vs {rhs}")]
    DimensionMismatch {
        context: String,
        lhs: usize,
        rhs: usize,
    },

    #[error("backward requires a scalar output, got shape {shape:?}")]
    NonScalarBackward { shape: Vec<usize> },

    #[error("tensor is detached from the tape; cannot backpropagate")]
    DetachedTensor,

    #[error("non-finite gradient for parameter `{param}`")]
    NanGradient { param: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("invalid distribution: {what}")]
    InvalidDistribution { what: String },

    #[error("transport marginals differ by {gap:e}, beyond feasibility tolerance")]
    InfeasibleMarginals { gap: f64 },

    #[error("dual witness violates the Lipschitz constraint at pair ({i}, {j}): |f_i - f_j| exceeds cost by {excess:e}")]
    LipschitzViolation { i: usize, j: usize, excess: f64 },

    #[error("fixed-point iteration did not converge within {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
