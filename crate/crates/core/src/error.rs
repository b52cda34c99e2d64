use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("normal equations are numerically singular")]
    DegenerateSystem,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("every feature is constant on this subset")]
    AllFeaturesConstant,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },
    #[error("target column `{0}` not found")]
    MissingTarget(String),
    #[error("non-numeric cell `{value}` at row {row}, column {col}")]
    NonNumericCell { row: usize, col: usize, value: String },
    #[error("split would leave one side empty (n = {n}, train fraction = {fraction})")]
    DegenerateSplit { n: usize, fraction: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported model format version {0}")]
    FormatVersion(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the input data rather than the configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::EmptyDataset
                | Error::EmptyInput
                | Error::Parse { .. }
                | Error::MissingTarget(_)
                | Error::NonNumericCell { .. }
                | Error::DegenerateSplit { .. }
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}
