use crate::integrate::Trajectory;

/// Errors produced by construction, validation and simulation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input data: inconsistent shapes, bad block layout, bad file contents.
    #[error("structural error: {0}")]
    Structural(String),

    /// A vector or matrix does not match the expected dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A validation check failed (residual above tolerance).
    #[error("validation failed: {0}")]
    Validation(String),

    /// Numerical failure: singular system, failed factorization, non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A state violates an active constraint beyond tolerance.
    #[error("constraint violation: {0}")]
    Constraint(String),

    /// Input file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// Integration stopped before `t_end`; carries the partial trajectory.
    #[error("integration aborted at t = {t}: {reason}")]
    IntegrationAbort {
        t: f64,
        reason: String,
        partial: Box<Trajectory>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
