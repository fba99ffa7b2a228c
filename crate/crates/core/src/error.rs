use thiserror::Error;

use crate::cosim::LinkError;
use crate::net::SolveError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario:\n{0}")]
    Invalid(crate::io::ValidationErrors),

    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("solver failure at t = {t_s} s (step {step}): {source}")]
    Solver {
        t_s: f64,
        step: u64,
        #[source]
        source: SolveError,
    },

    #[error("co-simulation link failure at t = {t_s} s: {source}")]
    Link {
        t_s: f64,
        #[source]
        source: LinkError,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("calibration infeasible: {0}")]
    Calibration(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
