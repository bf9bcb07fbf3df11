use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid planning problem: {0}")]
    InvalidProblem(String),

    #[error("world generation failed: {0}")]
    Generation(String),

    #[error("no path on the planning lattice")]
    NoGridPath,

    #[error("predicted path has fewer than two points after normalization")]
    EmptyPath,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("experiment aborted: {0}")]
    Experiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
