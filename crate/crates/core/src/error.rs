use crate::tensor::Shape;

/// Errors surfaced by the core library.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("non-finite value in {context}: {detail}")]
    NonFinite { context: String, detail: String },
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
