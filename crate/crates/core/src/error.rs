use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("index {index} out of range for {len} rows")]
    Index { index: usize, len: usize },
    #[error("row {row} has norm {norm:e}, below the normalization floor")]
    DegenerateRow { row: usize, norm: f64 },
    #[error("segment {0} is empty")]
    EmptySegment(usize),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("unknown class id {0}")]
    UnknownClass(u32),
    #[error("label hierarchy contains a cycle through class {0}")]
    Cycle(u32),
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("prompt {0:?} has no in-vocabulary tokens")]
    OutOfVocabulary(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(
        "training diverged at epoch {epoch}, batch {batch} (logit_scale {logit_scale}): {message}"
    )]
    Diverged {
        epoch: usize,
        batch: usize,
        logit_scale: f64,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
