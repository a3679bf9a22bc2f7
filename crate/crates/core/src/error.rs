use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("coefficient layout does not match the frame: {0}")]
    LayoutMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid scenario id {0} (expected 1, 2 or 3)")]
    InvalidScenario(u8),

    #[error("{folds} folds requested but only {rows} rows available")]
    TooManyFolds { folds: usize, rows: usize },

    #[error("dataset carries no ground truth")]
    MissingGroundTruth,

    #[error("malformed input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
