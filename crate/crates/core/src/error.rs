use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulation / surrogate stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("size limit exceeded: {what} = {value} (max {max})")]
    Size {
        what: &'static str,
        value: usize,
        max: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("invalid kernel in row {row}: {reason}")]
    Kernel { row: usize, reason: String },

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("training diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        history: crate::operator::LossHistory,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Toml(_) | Error::Domain(_) | Error::Size { .. }
        )
    }
}
