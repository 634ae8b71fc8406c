use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
    #[error("state has dimension {got}, expected {expected}")]
    StateDim { expected: usize, got: usize },
    #[error("action has dimension {got}, expected {expected}")]
    ActionDim { expected: usize, got: usize },
    #[error("state contains non-finite entries")]
    NonFiniteState,
    #[error("integration produced a non-finite state")]
    IntegrationOverflow,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("grid has {grid} axes but the environment state has {env} dimensions")]
    DimensionMismatch { grid: usize, env: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid oracle config: {0}")]
    InvalidConfig(String),
    #[error("no convergence after {sweeps} sweeps, residual {residual:e}")]
    NotConverged { sweeps: usize, residual: f64 },
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproxError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("gradient contains non-finite entries")]
    NonFiniteGradient,
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("checkpoint format: {0}")]
    Format(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("{op} is not defined for constraint kind {kind}")]
    KindMismatch { op: &'static str, kind: &'static str },
    #[error("invalid constraint parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("empty batch")]
    EmptyBatch,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
