use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("{op}: shape mismatch, expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("{op}: invalid argument: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },
}

pub type Result<T> = std::result::Result<T, NnError>;

pub(crate) fn mismatch(op: &'static str, expected: impl Into<String>, got: impl Into<String>) -> NnError {
    NnError::ShapeMismatch {
        op,
        expected: expected.into(),
        got: got.into(),
    }
}

pub(crate) fn invalid(op: &'static str, reason: impl Into<String>) -> NnError {
    NnError::InvalidArgument {
        op,
        reason: reason.into(),
    }
}
