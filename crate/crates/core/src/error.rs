use thiserror::Error;

/// Errors raised across the simulator and its verification harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("parameter outside theorem range: {0}")]
    Regime(String),
    #[error("numerical blow-up at step {step}: {message}")]
    Blowup { step: usize, message: String },
    #[error("conditioning error: {0}")]
    Conditioning(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
