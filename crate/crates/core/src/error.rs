use thiserror::Error;

/// Errors produced by the scene-graph pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Input failed validation; `path` names the offending field.
    #[error("{path}: {message}")]
    Validation { path: String, message: String },

    /// A numerical computation produced a non-finite value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed document: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
