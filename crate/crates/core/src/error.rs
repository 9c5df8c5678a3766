use thiserror::Error;

/// Errors raised while loading data, fitting maps, or writing artifacts.
#[derive(Debug, Error)]
pub enum LmduError {
    #[error("parse error at row {row}, column {col}: {message}")]
    Parse { row: usize, col: usize, message: String },
    #[error("non-binary response value {value:?} at row {row}, column {col}")]
    NonBinary { row: usize, col: usize, value: String },
    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("every response profile is all-zero")]
    AllZeroProfiles,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("zero total weight: {0}")]
    ZeroWeight(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("non-finite deviance at outer iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("model schema: {0}")]
    Schema(String),
    #[error("all {0} starts failed; first error: {1}")]
    AllStartsFailed(usize, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl LmduError {
    /// True for failures of the numerical procedures rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            LmduError::Singular(_)
                | LmduError::NonFinite { .. }
                | LmduError::Degenerate(_)
                | LmduError::ZeroWeight(_)
                | LmduError::AllStartsFailed(..)
        )
    }
}

pub type Result<T> = std::result::Result<T, LmduError>;
