//! Crate-wide error type.

use thiserror::Error;

/// Convenient result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument failed domain validation (parameter outside the scheme's
    /// parameter set, nonpositive tolerance, and so on).
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A convex body failed its construction-time invariants (box bounds out
    /// of order, empty or unbounded polytope).
    #[error("invalid body: {0}")]
    InvalidBody(String),

    /// An iterative solver stopped without certifying its tolerance.
    #[error("solver failure in {context}: {reason}")]
    SolverFailure { context: &'static str, reason: String },

    /// A barrier cut does not exist for the requested pair and level (the
    /// analytic center already satisfies the opponent-rate constraint).
    #[error("cut infeasible: {0}")]
    CutInfeasible(String),

    /// Two hypotheses that must be distinguishable have pairwise risk 1 (their
    /// parameter sets intersect).
    #[error("indistinguishable hypotheses: {0}")]
    AssumptionViolated(String),

    /// Operation undefined for the given scheme or configuration.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A quantity requested at runtime is infeasible (e.g. a target risk no
    /// repetition count can reach).
    #[error("infeasible request: {0}")]
    Infeasible(String),

    /// A runtime input (observation stream, sample, matrix shape) does not
    /// match its contract.
    #[error("input error: {0}")]
    InputError(String),

    /// An experiment configuration is malformed.
    #[error("config error: {0}")]
    ConfigError(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}
