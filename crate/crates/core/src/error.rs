use std::path::PathBuf;

/// Errors raised by table construction, forests, samplers and models.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid reference table: {0}")]
    InvalidTable(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("simulator failed {attempts} times in a row for row {row}; last parameters {theta:?}: {reason}")]
    SimulationBudget {
        row: usize,
        attempts: usize,
        theta: Vec<f64>,
        reason: String,
    },

    #[error("no proposal with positive prior density after {cap} attempts (kernel/prior mismatch?); last draw {last:?}")]
    ProposalRetries { cap: usize, last: Vec<f64> },

    #[error("no particle accepted at tolerance {epsilon}")]
    NoAcceptance { epsilon: f64 },

    #[error("simulation budget of {budget} exhausted at tolerance level {level} (epsilon {epsilon})")]
    BudgetExceeded {
        level: usize,
        epsilon: f64,
        budget: u64,
    },

    #[error("target density is not finite at every initialization attempt ({attempts} tried)")]
    NonFiniteTarget { attempts: usize },

    #[error("observation falls into an empty leaf in every tree")]
    EmptyLeaves,

    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("{path}:{line}: expected {expected} cells, found {found}")]
    RowLength {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: column {column} is not a finite number: {value:?}")]
    NonNumeric {
        path: PathBuf,
        line: usize,
        column: usize,
        value: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
