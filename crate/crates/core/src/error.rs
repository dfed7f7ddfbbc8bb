use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("catalog row {row}: {message}")]
    CatalogRow { row: usize, message: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("observation {t} has zero density under every state")]
    ImpossibleObservation { t: usize },

    #[error("state {state} received no posterior mass")]
    DegenerateState { state: usize },

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("enumeration over {paths} state paths exceeds the limit of {limit}")]
    TooLarge { paths: f64, limit: f64 },

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("cannot split {total} forecasts with a low-group size of {split}")]
    DegenerateSplit { split: usize, total: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
