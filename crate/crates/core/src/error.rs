use thiserror::Error;

/// Errors raised by the simulator and its estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid categorical spec: {0}")]
    InvalidSpec(String),

    #[error("index out of range: {what} = {value} (cardinality {card})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        card: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty log slice")]
    EmptyLog,

    #[error("ground truth has no sale mechanism")]
    NoSaleModel,

    #[error("spec has no display decision")]
    NoDecision,

    #[error("no environment reached confounding gap {min_gap} after {rounds} draws (best {best:.5})")]
    GapNotReached { min_gap: f64, rounds: usize, best: f64 },

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("graph has a cycle through `{0}`")]
    Cyclic(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("optimizer diverged at iteration {0}")]
    Diverged(usize),

    #[error("optimization lowered the exact objective from {initial:.8} to {last:.8}")]
    ObjectiveDecreased { initial: f64, last: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
