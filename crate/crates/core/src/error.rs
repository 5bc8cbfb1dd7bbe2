use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by tensor operations, the filtering engine and the data pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch in {dim}: {detail}")]
    Shape {
        op: &'static str,
        dim: &'static str,
        detail: String,
    },

    #[error("{0}: produced a non-finite value")]
    NonFinite(&'static str),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("malformed {format} data at byte {offset}: {reason}")]
    Format {
        format: &'static str,
        offset: usize,
        reason: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("training diverged at iteration {iteration} (loss = {loss})")]
    Diverged { iteration: usize, loss: f64 },
}

impl Error {
    pub(crate) fn shape(op: &'static str, dim: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            dim,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
