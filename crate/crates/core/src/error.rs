use std::path::PathBuf;

use thiserror::Error;

use crate::executor::connection::DbError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("feature `{0}` is listed more than once")]
    DuplicateFeature(String),
    #[error("no feature columns selected")]
    NoFeatures,
    #[error("target `{0}` is also listed as a feature")]
    TargetIsFeature(String),
    #[error("invalid identifier `{0}`: {1}")]
    BadIdentifier(String, &'static str),
    #[error("bin count must be at least 1, got {0}")]
    BadBinCount(i64),
    #[error("schema error: {0}")]
    Schema(String),

    #[error("empty input")]
    EmptyInput,
    #[error("expected {expected} values, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("dialect `{dialect}` cannot render this statement: {reason}")]
    DialectUnsupported {
        dialect: &'static str,
        reason: &'static str,
    },
    #[error("template error: {0}")]
    Template(String),
    #[error("distribution export supports 1 or 2 dimensions, got {0}")]
    DimsOutOfRange(usize),

    #[error("table `{0}` already exists")]
    TableExists(String),
    #[error("training table `{0}` has no complete rows")]
    EmptyTrainingTable(String),
    #[error("model `{0}` has no trained tables")]
    MissingModelTables(String),
    #[error("table `{table}` lacks feature column `{column}`")]
    MissingFeatureColumn { table: String, column: String },
    #[error("table `{0}` does not exist")]
    MissingTable(String),
    #[error("step {step} failed: {source}")]
    SqlExecution {
        step: String,
        #[source]
        source: DbError,
    },
    #[error(transparent)]
    Database(#[from] DbError),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("column `{column}` holds values other than 0/1")]
    NotBinary { column: String },
    #[error("pivot group `{group}`: row {row} has more than one hot column")]
    MultiHot { group: String, row: i64 },
    #[error("pivot group `{group}`: row {row} has no hot column")]
    ZeroHot { group: String, row: i64 },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidSplit(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
