use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: file is empty")]
    EmptyFile { path: PathBuf },
    #[error("duplicate header column `{column}`")]
    DuplicateHeader { column: String },
    #[error("column `{column}` is declared in the schema but missing from the CSV header")]
    MissingColumn { column: String },
    #[error("column `{column}` appears in the CSV header but is not declared in the schema")]
    UndeclaredColumn { column: String },
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    UnparseableNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: missing value")]
    MissingValue { row: usize, column: String },
    #[error("row {row}, column `{column}`: unknown category `{value}`")]
    UnknownCategory {
        row: usize,
        column: String,
        value: String,
    },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("not enough rows: need at least {needed}, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unseen category `{0}`")]
    UnseenCategory(String),
    #[error("encoder error: {0}")]
    Encoder(String),
    #[error("learner error: {0}")]
    Learner(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("synthesizer error: {0}")]
    Synthesizer(String),
    #[error("search space error: {0}")]
    SearchSpace(String),
    #[error("tuning error: {0}")]
    Tuning(String),
    #[error("bridge protocol error: {0}")]
    Bridge(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
