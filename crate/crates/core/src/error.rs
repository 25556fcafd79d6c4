use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("insufficient data for {what}: need {needed}, have {have}")]
    InsufficientData {
        what: String,
        needed: usize,
        have: usize,
    },

    #[error("degenerate covariate: {0}")]
    DegenerateCovariate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("no finite upper endpoint for shape {xi}")]
    NoFiniteEndpoint { xi: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("constraint violated: {0}")]
    ConstraintViolation(String),

    #[error("optimizer did not converge after {rounds} rounds (last objective {last_objective})")]
    NonConvergence {
        rounds: usize,
        last_objective: f64,
        last_iterate: Vec<f64>,
    },

    #[error("information matrix is singular or ill-conditioned (condition number {condition:e})")]
    Regularization { condition: f64 },

    #[error("bootstrap ensemble degenerate: retained {retained} of {requested}")]
    EnsembleDegenerate { retained: usize, requested: usize },

    #[error("unsupported artifact version {found} (expected {expected})")]
    Version { found: String, expected: String },

    #[error("unknown event {0}")]
    UnknownEvent(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
