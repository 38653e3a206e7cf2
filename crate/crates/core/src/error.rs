use thiserror::Error;

/// Errors raised by the plasticity engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("non-finite value in layer {layer} ({stage})")]
    NumericFault { layer: usize, stage: &'static str },

    #[error("mask edit error on masked layer {layer}, unit {unit}: {reason}")]
    MaskEdit {
        layer: usize,
        unit: usize,
        reason: &'static str,
    },

    #[error("plan inconsistency: {0}")]
    Plan(String),

    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    #[error("statistics error: {0}")]
    Stats(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors that indicate a numeric fault rather than a bad setup.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NumericFault { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
