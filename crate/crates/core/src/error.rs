//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function (e.g. `sigma <= 0`).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    /// The requested combination of options is not supported.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A non-finite value showed up during an iteration.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Curvature along a search direction is too close to zero to divide by.
    #[error("degenerate curvature along search direction ({0:e})")]
    DegenerateCurvature(f64),

    /// Polak-Ribière update with a vanishing previous gradient.
    #[error("degenerate gradient: previous gradient is zero")]
    DegenerateGradient,

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    /// Problem data that makes the requested computation meaningless (zero `A^T b`, zero vector scaled).
    #[error("degenerate problem: {0}")]
    DegenerateProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A solver failure on a particular point of a regularization path.
    #[error("at tau = {tau:e}: {source}")]
    AtTau {
        tau: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
