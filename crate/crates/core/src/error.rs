use thiserror::Error;

use crate::grid::Shape;

#[derive(Debug, Error)]
pub enum NfcError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: Shape, got: Shape },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("divergence at outer step {outer_step}, inner step {inner_step} (eta = {eta:e}, norm = {norm:e})")]
    Divergence {
        outer_step: usize,
        inner_step: usize,
        eta: f64,
        norm: f64,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {message}")]
    Format { context: String, message: String },
}

impl NfcError {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        NfcError::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn shape(expected: Shape, got: Shape) -> Self {
        NfcError::Shape { expected, got }
    }
}

pub type Result<T> = std::result::Result<T, NfcError>;
