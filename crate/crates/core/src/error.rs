use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("discretization failure: {0}")]
    Discretization(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("domain error: {0}")]
    Domain(String),
}

impl LabError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        LabError::Input(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        LabError::Numeric(msg.into())
    }

    /// True for failures caused by the caller's input rather than the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(self, LabError::Input(_) | LabError::Dimension { .. })
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
