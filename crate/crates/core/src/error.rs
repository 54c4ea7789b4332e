use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// A value lies outside the domain of an analytic operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative solver did not converge.
    #[error("numerical error: {what} did not converge (residual {residual:e} after {iterations} iterations)")]
    Convergence {
        what: &'static str,
        residual: f64,
        iterations: usize,
    },

    #[error("row {row} is outside the 17-bit row space")]
    RowRange { row: u64 },

    /// The SSQ had to hold more entries than it was sized for.
    #[error("SSQ overflow on bank {bank}: capacity {capacity} exhausted")]
    SsqOverflow { bank: usize, capacity: usize },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by the numeric machinery rather than by input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Convergence { .. } | Error::SsqOverflow { .. })
    }
}
