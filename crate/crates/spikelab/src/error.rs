use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the domain of a closed-form law.
    #[error("domain error: {0}")]
    Domain(String),

    /// Requested an outlier inversion for a point inside the bulk.
    #[error("no outlier: {0}")]
    NoOutlier(String),

    /// Spectral parameter sits on an eigenvalue.
    #[error("pole: {0}")]
    Pole(String),

    /// An iterative or factorization routine did not meet its tolerance.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Incompatible matrix or vector shapes.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid configuration, with the offending field path.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    /// Configuration and domain failures are user errors; the CLI maps every
    /// variant to the same exit status, but callers sometimes need to tell
    /// them apart from numerical trouble.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
