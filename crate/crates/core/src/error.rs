use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing target column `{0}`")]
    MissingTarget(String),

    #[error("non-binary target at row {row}: `{value}`")]
    NonBinaryTarget { row: usize, value: String },

    #[error("target column contains a single class")]
    SingleClass,

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse { row: usize, column: String, value: String },

    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("split yields an empty partition (train {train}, test {test})")]
    EmptyPartition { train: usize, test: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("uncovered value `{value}` for variable `{variable}`")]
    UncoveredValue { variable: String, value: String },

    #[error("invalid bin edit: {0}")]
    InvalidEdit(String),

    #[error("no monotonicity constraint declared for `{0}`")]
    NoConstraint(String),

    #[error("collinear design matrix: {0}")]
    Collinear(String),

    #[error("logistic fit did not converge in {0} iterations")]
    NotConverged(usize),

    #[error("unknown key `{0}` in external prediction table")]
    UnknownKey(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures raised by the numerical routines rather than by
    /// malformed input or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Collinear(_) | Error::NotConverged(_) | Error::Numeric(_))
    }
}
