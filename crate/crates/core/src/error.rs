use thiserror::Error;

/// Errors raised across ingestion, simulation, and inference.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },

    #[error("no rows for region `{0}`")]
    EmptyRegion(String),

    #[error("config error: missing required key `{0}`")]
    MissingKey(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("trajectory is empty: horizon {horizon} precedes epidemic start {t0}")]
    EmptyTrajectory { horizon: i64, t0: f64 },

    #[error("integration produced a non-finite state at t = {0}")]
    Integration(f64),

    #[error("series grid mismatch: {0}")]
    GridMismatch(String),

    #[error("sampler initialization failed: target is not finite at the initial point")]
    SamplerInit,

    #[error("sampler error: {0}")]
    Sampler(String),

    #[error("chain is empty")]
    EmptyChain,

    #[error("forecast horizon of {0} days exceeds the 60-day cap")]
    HorizonTooLong(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
