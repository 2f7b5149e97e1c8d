use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema mismatch: column `{0}` not found in header")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("row {row}: ordinal response {value} outside 0..{n_grades}")]
    OrdinalRange {
        row: usize,
        value: i64,
        n_grades: usize,
    },

    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("dataset is already standardized")]
    AlreadyStandardized,

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("bins must be 2 or 3, got {0}")]
    InvalidBins(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("negative count {0}")]
    NegativeCount(i64),

    #[error("cohesion is undefined for an empty set")]
    EmptyCluster,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("singular design, aliased columns: {}", .0.join(", "))]
    SingularDesign(Vec<String>),

    #[error("draws file: {0}")]
    Draws(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
