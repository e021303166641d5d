use std::path::PathBuf;

/// Errors raised by the pipeline stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file structure (header, column count, encoding).
    #[error("format error in {file} at line {line}: {message}")]
    Format {
        file: String,
        line: u64,
        message: String,
    },

    /// A single data row could not be interpreted.
    #[error("row error in {file} at line {line}: {message}")]
    Row {
        file: String,
        line: u64,
        message: String,
    },

    #[error("conflicting code map entries: {}", .0.join("; "))]
    CodeMapConflict(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty graph")]
    EmptyGraph,

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("missing stage: {0}")]
    MissingStage(String),

    /// An internal consistency check failed.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
