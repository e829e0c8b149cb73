use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GrfError {
    #[error("dataset needs at least 2 rows, got {0}")]
    EmptyData(usize),

    #[error("non-numeric value {value:?} at row {row}, column {column:?}")]
    NonNumericCell {
        /// 1-based data row (header excluded).
        row: usize,
        column: String,
        value: String,
    },

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("duplicate feature name {0:?}")]
    DuplicateFeature(String),

    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: &'static str, row: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("all sample weights are zero")]
    AllWeightsZero,

    #[error("k = {k} exceeds the {available} available neighbours")]
    KTooLarge { k: usize, available: usize },

    #[error("kernel bandwidth must be positive and distances non-negative")]
    NonPositiveBandwidthDistance,

    #[error("attribute has zero variance")]
    ZeroVariance,

    #[error("empty search grid: {0}")]
    EmptyGrid(&'static str),

    #[error("bandwidth {lambda} must be in [2, {max}]")]
    BandwidthTooLarge { lambda: usize, max: usize },

    #[error("model has no fitted local models")]
    ModelNotFitted,

    #[error("too few rows: {0}")]
    TooFewRows(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = GrfError> = std::result::Result<T, E>;
