//! Shared error type for the core library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Tensor shapes are incompatible for the requested operation.
    #[error("dimension error: {0}")]
    Dim(String),

    /// A forward or backward pass produced NaN/Inf, or a numeric check failed.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Optimizer or parameter-store state is inconsistent (e.g. missing gradients).
    #[error("state error: {0}")]
    State(String),

    /// Bracketed-tree parse failure, with the byte offset of the problem.
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    /// Malformed dataset, config, or checkpoint contents.
    #[error("data error: {0}")]
    Data(String),

    /// An input is outside the domain an operation supports.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub fn dim(msg: impl Into<String>) -> Self {
        CoreError::Dim(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        CoreError::Numeric(msg.into())
    }
    pub fn state(msg: impl Into<String>) -> Self {
        CoreError::State(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        CoreError::Data(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        CoreError::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
