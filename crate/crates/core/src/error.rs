use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the prediction, simulation and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("window rejected: {0}")]
    Window(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite activation in layer {layer}")]
    Numerical { layer: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("label mix unreachable after {attempts} attempts (realized idle/pull/push = {realized:?})")]
    MixUnreachable { attempts: usize, realized: [f64; 3] },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint version mismatch: found {found:?}, expected {expected:?}")]
    VersionMismatch { found: String, expected: String },

    #[error("simulation diverged at t = {time:.4} s")]
    SimulationDiverged { time: f64 },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("stale intention: no prediction for {age_ms:.0} ms")]
    StaleIntention { age_ms: f64 },

    #[error("statistics: {0}")]
    Stats(String),

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
