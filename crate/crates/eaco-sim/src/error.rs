//! Error types shared across the simulator.

use std::path::PathBuf;

use thiserror::Error;

/// All errors the simulator can produce.
#[derive(Debug, Error)]
pub enum SimError {
    /// A profile document could not be parsed.
    #[error("profile parse error: {0}")]
    ProfileParse(String),

    /// A profile record violates an internal-consistency invariant.
    #[error("profile validation failed for {record}: {reason}")]
    ProfileValidation { record: String, reason: String },

    /// A model name was not found in the profile database.
    #[error("unknown model '{0}'")]
    UnknownModel(String),

    /// Not enough data to fit the fallback interference model.
    #[error("fallback fit is degenerate: {0}")]
    DegenerateFit(String),

    /// A trace line could not be parsed (1-based line number).
    #[error("trace parse error at line {line}: {reason}")]
    TraceParse { line: usize, reason: String },

    /// A trace violates a structural invariant (ordering, duplicate ids, ...).
    #[error("trace validation failed: {0}")]
    TraceValidation(String),

    /// Invalid run or generator configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An operation was called outside its contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A completion-time prediction could not be made.
    #[error("prediction failed: {0}")]
    Prediction(String),

    /// Filesystem failure with the offending path attached.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
