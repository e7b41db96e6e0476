use thiserror::Error;

/// Errors raised by the library.
///
/// `Precondition` marks a refusal (the inputs are well formed but outside the
/// admissible region); the CLI maps it to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("weight is singular at node {node:?}")]
    Singular { node: Vec<f64> },
    #[error("missing cube {0}")]
    MissingCube(String),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_refusal(&self) -> bool {
        matches!(self, Error::Precondition(_) | Error::Dimension(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
