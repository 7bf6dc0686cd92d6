use thiserror::Error;

/// Errors raised by model construction, likelihood evaluation and sampling.
#[derive(Debug, Error)]
pub enum InchError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    #[error("prior upper bound u[{i}][{j}] is not finite")]
    UnboundedPrior { i: usize, j: usize },

    #[error("numerical underflow: {0}")]
    NumericalUnderflow(String),

    #[error("enumeration of {count} state sequences exceeds the limit of {limit}")]
    TooLarge { count: f64, limit: f64 },

    #[error("{sequences} interior state sequences exceed the guard of {guard}; kappa is too large for the integrated likelihood")]
    TooManySwitches { sequences: f64, guard: f64 },

    #[error("state sequence has length {got}, expected {expected}")]
    SequenceLengthMismatch { expected: usize, got: usize },

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("time at row {row} ({time}) does not exceed the previous time ({previous})")]
    NonMonotoneTime { row: usize, time: f64, previous: f64 },

    #[error("invalid configuration at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl InchError {
    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        InchError::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for the errors that signal a breached enumeration guard.
    pub fn is_guard_breach(&self) -> bool {
        matches!(self, InchError::TooManySwitches { .. } | InchError::TooLarge { .. })
    }
}

pub type Result<T> = std::result::Result<T, InchError>;
