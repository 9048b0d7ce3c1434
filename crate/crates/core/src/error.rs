use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("drag constraint matrix is singular at alpha = ({alpha1}, {alpha2}) (|det| = {det:e})")]
    SingularConstraint { alpha1: f64, alpha2: f64, det: f64 },

    #[error("locked inertia tensor is singular at alpha = ({alpha1}, {alpha2})")]
    SingularInertia { alpha1: f64, alpha2: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("loop leaves the grid at ({alpha1}, {alpha2})")]
    LoopOutsideGrid { alpha1: f64, alpha2: f64 },

    #[error("loop intersects itself (segments {0} and {1})")]
    SelfIntersectingLoop(usize, usize),

    #[error("loop is not closed (gap {0:e})")]
    OpenLoop(f64),

    #[error("state became non-finite at step {step}")]
    NonFiniteState { step: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("non-finite loss after {env_steps} environment steps ({detail})")]
    NonFiniteLoss { env_steps: usize, detail: String },

    #[error("checkpoint schema version {found} is not supported (expected {expected})")]
    CheckpointSchemaMismatch { found: u32, expected: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
