use thiserror::Error;

/// Errors produced by model construction, training and data handling.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("ill-conditioned normal matrix: condition estimate {condition:e} exceeds {threshold:e}")]
    IllConditioned { condition: f64, threshold: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("step matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("step matrix rejected: {0}")]
    Unstable(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, ElmError>;

impl ElmError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ElmError::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        ElmError::Shape {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
