use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid layer sizes: {0}")]
    InvalidLayerSizes(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("architecture mismatch: {0}")]
    Architecture(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("action out of bounds: {0}")]
    ActionOutOfBounds(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("training diverged at step {step}: |loss| = {loss:e}")]
    Diverged { step: usize, loss: f64 },

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
