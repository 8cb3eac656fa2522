use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("training diverged: non-finite gradient in parameter `{param}`")]
    Divergence { param: String },

    #[error("non-finite loss at epoch {epoch}, step {step}: {what}")]
    NonFiniteLoss { epoch: usize, step: usize, what: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("step index {t} outside schedule (valid {lo}..={hi})")]
    Index { t: usize, lo: usize, hi: usize },

    #[error("atlas does not cover labels {missing:?}")]
    AtlasCoverage { missing: Vec<u32> },

    #[error("invalid connectome: entry ({i},{j}) {reason}")]
    Validation { i: usize, j: usize, reason: String },

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint does not match configuration: {0}")]
    Version(String),

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
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
