use std::path::PathBuf;

use thiserror::Error;

use crate::metrics::Beamformer;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("infeasible antenna region: {0}")]
    InfeasibleRegion(String),

    #[error("no feasible grid point for antenna {antenna}")]
    InfeasibleGrid { antenna: usize },

    #[error("bisection bracket failure: h(lambda_min={lambda_min}) = {h_min}, h(lambda_max={lambda_max}) = {h_max}")]
    BisectionBracket {
        lambda_min: f64,
        lambda_max: f64,
        h_min: f64,
        h_max: f64,
    },

    /// Bisection ran out of iterations; carries the last iterate.
    #[error("bisection did not converge after {iterations} iterations (lambda={lambda}, power gap={gap})")]
    BisectionNotConverged {
        iterations: usize,
        lambda: f64,
        gap: f64,
        last: Box<Beamformer>,
    },

    #[error("linear solve failed: {0}")]
    Numerical(String),

    #[error("unsupported problem size: {0}")]
    UnsupportedSize(String),

    #[error("outer iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
