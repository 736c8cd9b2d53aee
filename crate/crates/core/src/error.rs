use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("empty bag: a sample needs at least one patch")]
    EmptyBag,

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("split error: {0}")]
    Split(String),

    #[error("sample {0} has no usable modality for this model")]
    Unroutable(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("sequencing error: {0}")]
    Sequencing(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("file error at {}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Dimension { op, left, right }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 usage, 3 data, 4 numeric/check failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 2,
            Error::Numeric(_) | Error::CheckFailed(_) | Error::UndefinedMetric(_) => 4,
            _ => 3,
        }
    }
}
