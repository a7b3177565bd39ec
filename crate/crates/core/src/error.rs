use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the core library.
///
/// Variants fall into two families that the command line maps onto distinct
/// exit codes: data problems (bad files, inconsistent inputs, degenerate
/// cohorts) and numerical failures (solver non-convergence, undefined
/// statistics).
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header {path}: {message}")]
    Header { path: PathBuf, message: String },

    #[error("buffer length mismatch in {path}: expected {expected} values, found {found}")]
    LengthMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("non-finite intensity at voxel {index}")]
    NonFinite { index: usize },

    #[error("invalid dimensions {0:?}")]
    InvalidDims([usize; 3]),

    #[error("invalid spacing {0:?}")]
    InvalidSpacing([f64; 3]),

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimsMismatch { left: [usize; 3], right: [usize; 3] },

    #[error("empty mask")]
    EmptyMask,

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("table error: {0}")]
    Table(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for numerical failures (as opposed to bad input data).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NotConverged { .. } | Error::Undefined(_))
    }
}
