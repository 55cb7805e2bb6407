use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", path.display())]
    MissingFile { path: PathBuf },

    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("empty set: {0}")]
    EmptySet(String),

    #[error("no {role} eval set for language '{language}'")]
    MissingEvalSet { role: String, language: String },

    #[error("ambiguous {role} eval set for language '{language}': {candidates:?}")]
    AmbiguousEvalSet {
        role: String,
        language: String,
        candidates: Vec<String>,
    },

    #[error("language sets differ: {gold:?} vs {predicted:?}")]
    LanguageSetMismatch {
        gold: Vec<String>,
        predicted: Vec<String>,
    },

    #[error("ranking needs at least 2 languages, got {0}")]
    DegenerateRanking(usize),

    #[error("invalid ranking: {0}")]
    InvalidRanking(String),

    #[error("non-finite score for '{0}'")]
    NonFiniteScore(String),

    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero vector for example '{0}'")]
    ZeroVector(String),

    #[error("ratio {0} outside [0, 1]")]
    RatioOutOfRange(f64),

    #[error("label mismatch for example '{0}'")]
    LabelMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
