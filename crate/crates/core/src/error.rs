use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at index {index}{context}")]
    NonFinite { index: usize, context: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(
        "spectral transform left an imaginary residue {residue:.3e} (threshold {threshold:.3e})"
    )]
    ImaginaryResidue { residue: f64, threshold: f64 },

    #[error("constant calibration failed: {0}")]
    Calibration(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("solver exceeded {max_iters} iterations (last residual {last:.3e})")]
    MaxIterations {
        max_iters: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("monotonicity violated: residual failed to decrease over {0} consecutive steps")]
    MonotonicityViolated(usize),

    #[error("solve failed at eps index {index} (eps = {eps:.3e}): {source}")]
    Continuation {
        index: usize,
        eps: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at line {line}, key `{key}`: {message}")]
    Config {
        line: usize,
        key: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors raised by the iterative solver (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::MaxIterations { .. } | Error::MonotonicityViolated(_) => true,
            Error::Continuation { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}
