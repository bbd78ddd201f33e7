use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("duplicate column header `{0}`")]
    DuplicateHeader(String),
    #[error("label column `{0}` not found")]
    LabelNotFound(String),
    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("label column has missing values at {count} rows")]
    MissingLabels { count: usize },
    #[error("degenerate problem: label has a single distinct value `{0}`")]
    DegenerateProblem(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("fold count error: {rows} rows cannot be split into {k} folds")]
    FoldCount { rows: usize, k: usize },
    #[error("model unavailable: {0}")]
    ModelUnavailable(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("metric domain error: {0}")]
    MetricDomain(String),
    #[error("time budget too small: cheapest family {family} needs an estimated {estimate:.2}s")]
    BudgetTooSmall { family: String, estimate: f64 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("training interrupted after {0} fold fits")]
    Interrupted(usize),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("binary encoding error: {0}")]
    Binary(#[from] bincode::Error),
}

impl Error {
    /// Machine-readable code used by the command line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::FileNotFound(_)
            | Error::DuplicateHeader(_)
            | Error::LabelNotFound(_)
            | Error::RaggedRow { .. }
            | Error::MissingLabels { .. }
            | Error::DegenerateProblem(_)
            | Error::SchemaMismatch(_)
            | Error::FoldCount { .. }
            | Error::UndefinedMetric(_)
            | Error::MetricDomain(_)
            | Error::Csv(_) => "E_DATA",
            Error::InvalidArgument(_) => "E_USAGE",
            Error::ModelUnavailable(_) | Error::BudgetTooSmall { .. } | Error::Interrupted(_) => {
                "E_BUDGET"
            }
            Error::CorruptCheckpoint(_) | Error::Json(_) | Error::Binary(_) => "E_CORRUPT",
            Error::Io(_) => "E_IO",
        }
    }
}
