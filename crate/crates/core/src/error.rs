use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate {kind} id `{id}` at line {line}")]
    Duplicate { kind: &'static str, id: String, line: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unknown topic `{0}`")]
    UnknownTopic(String),

    #[error("insufficient population: {n} users with a score, need at least {min}")]
    InsufficientPopulation { n: usize, min: usize },

    #[error("no non-link with positive proclivity mass could be drawn ({rejections} consecutive rejections)")]
    NearCompleteGraph { rejections: u64 },

    #[error("degenerate proclivity weights: all {0} weights are zero")]
    DegenerateWeights(&'static str),

    #[error("user `{0}` appears in the dataset but not in the feature table")]
    MissingFeatures(String),

    #[error("information matrix is ill-conditioned in columns {columns:?}")]
    IllConditioned { columns: Vec<String> },

    #[error("generation error: {0}")]
    Generation(String),

    #[error("slice `{slice}`: {source}")]
    Slice {
        slice: String,
        #[source]
        source: Box<Error>,
    },

    #[error("empty study result, nothing to write")]
    EmptyStudy,

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
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn in_slice(self, slice: &str) -> Self {
        Error::Slice { slice: slice.to_string(), source: Box::new(self) }
    }
}
