use thiserror::Error;

/// Errors raised by model construction, regularizers, solvers and the validation suite.
#[derive(Debug, Error)]
pub enum SekiError {
    /// Structural mismatch between operands (dimensions, counts).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A parameter is outside its admissible range.
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    /// The requested operation is not available for this object.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A computation produced non-finite values or failed to factorize.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl SekiError {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        SekiError::Invalid {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        SekiError::Dimension(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, SekiError>;
