use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { expected: u32, found: u32 },

    #[error("truncated payload while reading {what}")]
    Truncated { what: &'static str },

    #[error("matrix has zero dimension ({rows}x{cols})")]
    ZeroDims { rows: usize, cols: usize },

    #[error("malformed {what} at line {line}: {detail}")]
    Parse {
        what: &'static str,
        line: usize,
        detail: String,
    },

    #[error("row count mismatch for view {view}: expected {expected}, got {actual}")]
    RowCountMismatch {
        view: String,
        expected: usize,
        actual: usize,
    },

    #[error("text view {0} has no bag-of-words data")]
    MissingBow(String),

    #[error("index {index} out of range for {what} (size {size})")]
    IndexOutOfRange {
        what: String,
        index: usize,
        size: usize,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("view not found: {0}")]
    ViewNotFound(String),

    #[error("no text views available")]
    NoTextViews,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown configuration key: {0}")]
    UnknownConfigKey(String),

    #[error("line count mismatch: {path} has {actual} lines, expected {expected}")]
    LineCountMismatch {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("training diverged: non-finite loss in epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("i/o error on {path}: {source}")]
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

    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }

    /// Process exit code used by the command-line tool. Every variant maps to
    /// its own code so scripted callers can tell failures apart.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 10,
            Error::BadMagic { .. } => 11,
            Error::UnsupportedVersion { .. } => 12,
            Error::Truncated { .. } => 13,
            Error::ZeroDims { .. } => 14,
            Error::Parse { .. } => 15,
            Error::DimensionMismatch { .. } => 16,
            Error::RowCountMismatch { .. } => 17,
            Error::MissingBow(_) => 18,
            Error::IndexOutOfRange { .. } => 19,
            Error::EmptyCorpus => 20,
            Error::EmptyInput(_) => 21,
            Error::ViewNotFound(_) => 22,
            Error::NoTextViews => 23,
            Error::InvalidConfig(_) => 24,
            Error::UnknownConfigKey(_) => 25,
            Error::LineCountMismatch { .. } => 26,
            Error::Diverged { .. } => 27,
        }
    }
}
