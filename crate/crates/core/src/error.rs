use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {op} requires positive eigenvalues, found {eigenvalue:e}")]
    Domain { op: &'static str, eigenvalue: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("singular matrix (pivot {pivot:e} below threshold {threshold:e})")]
    Singular { pivot: f64, threshold: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("not positive definite: smallest eigenvalue {min:e} vs largest {max:e}")]
    NotPositiveDefinite { min: f64, max: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("tape: {0}")]
    Tape(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {msg}")]
    Diverged {
        epoch: usize,
        batch: usize,
        msg: String,
    },

    #[error("scoring triple ({head}, {rel}, {tail}): {source}")]
    Score {
        head: usize,
        rel: usize,
        tail: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Invalid(String),

    #[error("{path}: {source}")]
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

    /// True for failures that come from numerics rather than usage or IO.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Domain { .. }
            | Error::NoConvergence { .. }
            | Error::Singular { .. }
            | Error::NonFinite(_)
            | Error::NotPositiveDefinite { .. }
            | Error::Diverged { .. } => true,
            Error::Score { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
