use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", path.display())]
    MissingFile { path: PathBuf },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("raw data size mismatch in {}: expected {expected} bytes, found {found}", path.display())]
    SizeMismatch { path: PathBuf, expected: u64, found: u64 },

    #[error("unsupported {what}: {found}")]
    Unsupported { what: &'static str, found: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("training diverged: {0}")]
    Divergence(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile { path }
        } else {
            Error::Io { path, source }
        }
    }

    /// Process exit code grouping used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingFile { .. } | Error::Io { .. } => 3,
            Error::Json { .. }
            | Error::SizeMismatch { .. }
            | Error::Unsupported { .. }
            | Error::Invalid(_)
            | Error::DimensionMismatch { .. } => 4,
            Error::Infeasible(_) | Error::Divergence(_) => 5,
        }
    }
}
