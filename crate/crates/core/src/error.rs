use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown token `{0}`")]
    UnknownToken(String),

    #[error("malformed token list: expression already complete before position {position}")]
    MalformedPrefix { position: usize },

    #[error("incomplete token list: {remaining} more token(s) needed")]
    Incomplete { remaining: usize },

    #[error("token list is already a complete expression")]
    Complete,

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("intersection {intersection}: phase {phase} out of range ({count} phases)")]
    PhaseOutOfRange {
        intersection: usize,
        phase: usize,
        count: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("controller failed: {0}")]
    Controller(String),

    #[error("reward must be positive and finite, got {0}")]
    Reward(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
