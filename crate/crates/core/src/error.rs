use thiserror::Error;

/// Errors raised by the bound, estimation and pipeline routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("component k={k} aliases: frequency {frequency} rad/sample is not below 2π")]
    Aliasing { k: usize, frequency: f64 },

    #[error("model order mismatch: expected K={expected}, got K={found}")]
    OrderMismatch { expected: usize, found: usize },

    #[error("{what} is ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { what: &'static str, condition: f64 },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("unsupported audio: {0}")]
    Audio(String),

    #[error("no accepted frames: {0}")]
    NoAcceptedFrames(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
