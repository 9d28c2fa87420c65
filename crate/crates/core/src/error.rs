use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("invalid taxel selection: {0}")]
    InvalidSelection(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid rate: {0}")]
    InvalidRate(String),

    #[error("invalid sampler: {0}")]
    InvalidSampler(String),

    #[error("aliasing: sampling rate {rate_hz} Hz must exceed twice the highest retained mode ({max_mode_hz:.3} Hz)")]
    Aliasing { rate_hz: f64, max_mode_hz: f64 },

    #[error("characteristic-root solver failed for mode {mode}")]
    RootSolver { mode: usize },

    #[error("SMO did not converge within {iterations} iterations (duality gap {duality_gap:e})")]
    Convergence { iterations: usize, duality_gap: f64 },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("stratification impossible: {0}")]
    Stratification(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("adapter error: {0}")]
    Adapter(String),

    #[error("parse error in {path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
