use thiserror::Error;

/// Errors raised by the solvers, simulators and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("node {0} is not part of the lattice")]
    NodeOutOfRange(usize),

    #[error("node {0} has an empty ball neighborhood")]
    EmptyStencil(usize),

    #[error("lattice epsilon {lattice} does not match parameter epsilon {params}")]
    EpsilonMismatch { lattice: f64, params: f64 },

    #[error("strategy moved the token by {distance}, which is not below epsilon = {epsilon}")]
    StrategyViolation { distance: f64, epsilon: f64 },

    #[error("no lattice node lies within epsilon of the current position")]
    NoCandidates,

    #[error("all {0} trials reached the round cap; estimate is invalid")]
    AllTrialsCapped(usize),

    #[error("gradient norm {0:e} is below the threshold; normalized operator undefined")]
    DegenerateGradient(f64),

    #[error("field takes the negative value {value} at node {node}")]
    NegativeField { node: usize, value: f64 },

    #[error("quadrature level {0} is too coarse")]
    CoarseQuadrature(usize),

    #[error("query ball is not contained in the domain: {0}")]
    BallNotInside(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
