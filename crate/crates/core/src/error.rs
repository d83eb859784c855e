use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A plug-in target is undefined for the given weights (e.g. one CATE arm carries no weight).
    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("insufficient bootstrap replicates: need {needed}, have {available}")]
    InsufficientReplicates { needed: usize, available: usize },

    #[error("singular covariance matrix (rank {rank} of {dim})")]
    SingularCovariance { rank: usize, dim: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("malformed forest file: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used by front ends to pick an exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) | Error::DimensionMismatch { .. } => {
                ErrorKind::Usage
            }
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::Format(_)
            | Error::Io { .. }
            | Error::Csv(_) => ErrorKind::Data,
            Error::DegenerateData(_)
            | Error::DegenerateTarget(_)
            | Error::InsufficientReplicates { .. }
            | Error::SingularCovariance { .. } => ErrorKind::Numeric,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
