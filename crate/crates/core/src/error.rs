use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the unrolling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("point lies on the spiral axis; angle is undefined")]
    DegenerateAngle,

    #[error("non-finite position at Euler step {step}")]
    NonFinite { step: usize },

    #[error("non-finite loss in term `{term}` (sample {sample})")]
    NonFiniteLoss { term: &'static str, sample: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("{}: malformed input at byte {offset}: expected {expected}", file.display())]
    Format {
        file: PathBuf,
        offset: u64,
        expected: String,
    },

    #[error("{}: {source}", path.display())]
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

    pub(crate) fn format(path: impl Into<PathBuf>, offset: u64, expected: impl Into<String>) -> Self {
        Error::Format {
            file: path.into(),
            offset,
            expected: expected.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
