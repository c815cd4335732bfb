use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    /// A config value violates an invariant. The message names the field.
    #[error("{0}")]
    InvalidConfig(String),

    #[error("coincident nodes: distance must be positive")]
    CoincidentNodes,

    #[error("infeasible altitude band: min altitude {min} m exceeds arena height {max} m")]
    InfeasibleAltitude { min: f64, max: f64 },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("non-finite input to {0}")]
    NonFinite(&'static str),

    #[error("boundary sample: component {index} = {value} is not strictly inside the simplex")]
    BoundarySample { index: usize, value: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite log-probability for agent {agent} at slot {slot}")]
    NonFiniteLogProb { agent: usize, slot: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("experiment error: {0}")]
    Experiment(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
