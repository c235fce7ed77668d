use thiserror::Error;

/// Crate-wide error type. Game-level failures carry the 1-based round index
/// where the referee or a strategy detected the problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("depth overflow: cannot extend a node at depth {depth} (tree depth {d})")]
    DepthOverflow { depth: u8, d: u8 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("realizability violation at round {round}: no hypothesis is consistent with the labels")]
    RealizabilityViolation { round: usize },

    #[error("announced sequence has length {got}, expected {expected}")]
    SequenceLengthMismatch { expected: usize, got: usize },

    #[error("adversary answered inconsistently to identical histories: {0}")]
    ProbeNondeterminism(String),

    #[error("expert pool exceeded cap of {cap} (pathological run; raise --expert-cap to override)")]
    ExpertCapExceeded { cap: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
