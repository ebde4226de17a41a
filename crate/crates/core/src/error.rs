use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the range where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("cannot deconvolve: measured width {measured} nm does not exceed resolution {resolution} nm")]
    InfeasibleDeconvolution { measured: f64, resolution: f64 },

    #[error("invalid dispersion profile: {0}")]
    InvalidProfile(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("not found: {0}")]
    NotFound(String),

    /// The peak of a sampled curve sits on the grid boundary, so no width can be read off.
    #[error("peak at grid edge (index {index})")]
    PeakAtEdge { index: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("index out of range: {0}")]
    Range(String),

    #[error("photon-number truncation too severe: retained mass {retained} < 1 - 1e-6 at n_max = {n_max}")]
    Truncation { retained: f64, n_max: usize },

    #[error("conditioning event has zero probability (m = {clicks})")]
    ZeroProbabilityCondition { clicks: usize },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
