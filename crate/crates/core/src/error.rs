use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A caller-supplied value is outside its documented domain.
    #[error("invalid input: {0}")]
    Input(String),

    /// Cached state no longer matches the parameters it was produced for.
    #[error("stale state: {0}")]
    State(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    /// The requested run cannot proceed with the given configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("duplicate sample id {0}")]
    DuplicateId(u64),

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("CSV header mismatch in {path}: expected `{expected}`, found `{found}`")]
    HeaderMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the configuration rather than by the run itself.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Range(_))
    }
}
