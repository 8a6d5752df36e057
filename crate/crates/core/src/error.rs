use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },

    #[error("non-binary target `{column}`: {distinct} distinct values")]
    NonBinaryTarget { column: String, distinct: usize },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter outside the configuration grid: {0}")]
    OutsideGrid(String),

    #[error("single-class training data")]
    SingleClass,

    #[error("class too small for stratification: {0}")]
    ClassTooSmall(String),

    #[error("verbatim leak: synthetic row {0} equals a replaced record")]
    VerbatimLeak(usize),

    #[error("not supported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Pipeline(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
