use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum NgseError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("insufficient data: {patients} patients, at least {required} required for {free_params} free parameters")]
    InsufficientData {
        patients: usize,
        required: usize,
        free_params: usize,
    },

    #[error("no start converged within {max_iterations} iterations ({n_starts} starts tried)")]
    NoConvergedStart {
        n_starts: usize,
        max_iterations: usize,
    },

    #[error("observed information is singular or not positive definite")]
    SingularInformation,

    #[error("slope of method {method} is {slope}, too small for normalized ranking")]
    DegenerateSlope { method: usize, slope: f64 },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("no data rows in input")]
    EmptyData,

    #[error("row {row} has {got} fields, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NgseError>;
