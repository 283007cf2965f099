//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A coordinate fell outside its legal range. Names the offending field.
    #[error("invalid {field}: {value} (expected {expected})")]
    InvalidCoordinate {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },

    /// Tensor or sequence dimensions do not line up.
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },

    /// A token vector is structurally broken (wrong length, empty block, ...).
    #[error("malformed token vector: {0}")]
    MalformedToken(String),

    /// Numeric precondition violated (NaN input, rate out of range, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Dataset-level failures: empty set, unknown category, bad record.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// Model/checkpoint usage errors (wrong variant, missing prior, ...).
    #[error("model error: {0}")]
    Model(String),

    /// Training aborted; carries the step diagnostic.
    #[error("training aborted at step {step} (lr={lr:.3e}, beta={beta:.4}): {reason}")]
    TrainingAborted {
        step: u64,
        lr: f64,
        beta: f64,
        reason: String,
    },

    /// Run configuration rejected; every violated field is listed.
    #[error("invalid configuration: {}", violations.join("; "))]
    InvalidConfig { violations: Vec<String> },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
