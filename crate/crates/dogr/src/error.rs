//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("covariance matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: String },

    #[error("singular weighted design matrix ({context})")]
    SingularDesign { context: String },

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "insufficient data: fitting {k} components over {p} features needs more than \
         {required} rows, got {actual}"
    )]
    InsufficientData {
        required: usize,
        actual: usize,
        k: usize,
        p: usize,
    },

    #[error("component {component} collapsed at iteration {iteration}: {details}")]
    DegenerateComponent {
        component: usize,
        iteration: usize,
        details: String,
    },

    #[error("parse error at row {row}, column '{column}': {message}")]
    CsvParse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("column '{0}' not found in header")]
    MissingColumn(String),

    #[error("empty file: {0}")]
    EmptyFile(String),

    #[error("feature names mismatch: {0}")]
    FeatureMismatch(String),

    #[error("model selection failed: {0}")]
    SelectionFailed(String),

    #[error("evaluation failed: {0}")]
    EvalFailed(String),

    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
