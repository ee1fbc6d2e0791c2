use std::path::PathBuf;

use thiserror::Error;

use crate::ingest::ColumnRef;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no .csv tables found in {0}")]
    NoTables(PathBuf),

    #[error("duplicate table id `{0}`")]
    DuplicateTable(String),

    #[error("malformed table {path}: {reason}")]
    MalformedTable { path: PathBuf, reason: String },

    #[error("query column has no non-empty values")]
    EmptyQuery,

    #[error("cannot compute a signature over an empty value set")]
    EmptySet,

    #[error("signatures are incompatible: {0}")]
    IncompatibleSignature(String),

    #[error("k must be at least 1")]
    InvalidK,

    #[error("column `{column}` is not part of table `{table}`")]
    UnknownColumn { table: String, column: String },

    #[error("column {0} has no values")]
    EmptyColumn(ColumnRef),

    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),

    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("embedding table is empty")]
    EmptyIndex,

    #[error("decision matrix has no rows")]
    EmptyMatrix,

    #[error("invalid score: {0}")]
    InvalidScore(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("query column not found: {0}")]
    QueryNotFound(String),

    #[error("index build failed: {0}")]
    Build(String),

    #[error("corrupt index file {path}: {reason}")]
    CorruptIndex { path: PathBuf, reason: String },

    #[error("ground truth line {line}: {reason}")]
    GroundTruth { line: usize, reason: String },

    #[error("empty text at position {0}")]
    EmptyText(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
