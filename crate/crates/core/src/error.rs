use thiserror::Error;

use crate::integrator::AbortReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("truncation error: {0}")]
    Truncation(String),

    #[error("out of regime: {0}")]
    OutOfRegime(String),

    #[error("label ambiguity: {0}")]
    LabelAmbiguity(String),

    #[error("unknown dressed label {0}")]
    UnknownLabel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("monitor abort at t = {:.6e}: {}", .0.time, .0.reason)]
    MonitorAbort(Box<AbortReport>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
