use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cholesky factorization of {matrix} failed after jitter {jitter:e}")]
    Factorization { matrix: String, jitter: f64 },

    #[error("no convergence after {iterations} iterations: {detail}")]
    NoConvergence { iterations: usize, detail: String },

    #[error("quasi-separation detected: max |coefficient| = {max_abs:.3}")]
    Separation { max_abs: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("sweep {sweep}, step `{step}`: {source}")]
    Step {
        sweep: usize,
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_step(self, sweep: usize, step: &'static str) -> Self {
        Error::Step {
            sweep,
            step,
            source: Box::new(self),
        }
    }
}
