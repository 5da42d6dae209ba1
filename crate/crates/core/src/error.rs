use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("degenerate keypoints at joint {joint}")]
    DegenerateKeypoint { joint: usize },

    #[error("invalid keypoints: {0}")]
    InvalidKeypoints(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid rank k={k} (must be in 1..={max})")]
    InvalidRank { k: usize, max: usize },

    #[error("numerical fault: {0}")]
    NumericalFault(String),

    #[error("training diverged at step {step}; last stable step {last_stable:?}")]
    TrainingDiverged {
        step: usize,
        last_stable: Option<usize>,
    },

    #[error("no pose available for object '{object}'")]
    UnresolvedFrame { object: String },

    #[error("cannot split identical points into two clusters")]
    DegenerateCluster,

    #[error("object '{object}' has {count} grasps, need at least 2")]
    InsufficientData { object: String, count: usize },

    #[error("unknown object '{0}'")]
    UnknownObject(String),

    #[error("action mode mismatch: expected {expected}, got {got}")]
    ModeMismatch { expected: String, got: String },

    #[error("no synergy model for latent dimension {0}")]
    MissingModel(usize),

    #[error("hand description hash mismatch: model built for {model}, active hand is {active}")]
    HandMismatch { model: String, active: String },

    #[error("environment {env} failed: {source}")]
    EnvFault {
        env: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

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

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::ContractViolation(_) => "contract_violation",
            Error::DegenerateKeypoint { .. } => "degenerate_keypoint",
            Error::InvalidKeypoints(_) => "invalid_keypoints",
            Error::EmptyDataset => "empty_dataset",
            Error::InvalidRank { .. } => "invalid_rank",
            Error::NumericalFault(_) => "numerical_fault",
            Error::TrainingDiverged { .. } => "training_diverged",
            Error::UnresolvedFrame { .. } => "unresolved_frame",
            Error::DegenerateCluster => "degenerate_cluster",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::UnknownObject(_) => "unknown_object",
            Error::ModeMismatch { .. } => "mode_mismatch",
            Error::MissingModel(_) => "missing_model",
            Error::HandMismatch { .. } => "hand_mismatch",
            Error::EnvFault { .. } => "env_fault",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
            Error::Csv { .. } => "csv",
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}
