use thiserror::Error;

/// Errors raised by the solver and its plumbing.
#[derive(Debug, Error)]
pub enum ZkError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular stage matrix at k = {k} (h = {h})")]
    SingularStage { k: f64, h: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("step failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("solver failure: {reason} (last residual {residual:e})")]
    SolverFailure { reason: String, residual: f64 },

    #[error("Newton iteration converged to the trivial solution")]
    TrivialSolution,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error("no radiation contour found behind the peak")]
    NoRadiation,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ZkError>;
