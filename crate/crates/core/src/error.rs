use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("trace `{trace}`: {msg}")]
    InvalidTrace { trace: String, msg: String },

    #[error("trace too short: `{trace}` has {len} samples, need at least {need}")]
    TraceTooShort {
        trace: String,
        len: usize,
        need: usize,
    },

    #[error("trace shorter than window: `{trace}` has {len} samples, window is {window}")]
    ShorterThanWindow {
        trace: String,
        len: usize,
        window: usize,
    },

    #[error(
        "zero variance in feature `{feature}`; add sensor noise or reject the degenerate trace"
    )]
    ZeroVariance { feature: &'static str },

    #[error("unsupported speed factor `{0}`; supported: 1/8, 1/7, ..., 1/2, 1, 2, ..., 8")]
    UnsupportedFactor(String),

    #[error("shape mismatch on {axis}: expected {expected}, got {got}")]
    Shape {
        axis: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
