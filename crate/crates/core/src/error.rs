use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("instance has no agents")]
    EmptyInstance,

    #[error("agent {index}: {reason}")]
    InvalidAgent { index: usize, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("total endowment is zero; price is undefined")]
    NoResources,

    #[error("instance too large for oracle: {0}")]
    TooLarge(String),

    #[error("simulation failed to reach equilibrium: {0}")]
    Simulation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
