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

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: duplicate vocabulary entry {word:?}")]
    DuplicateWord {
        path: PathBuf,
        line: usize,
        word: String,
    },

    #[error("invalid language tag {0:?} (expected a two-letter ISO-639-1 code)")]
    InvalidLanguage(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero vector for term {term:?} under cosine similarity")]
    ZeroVector { term: String },

    #[error("empty {0} set")]
    EmptySet(&'static str),

    #[error("degenerate effect size: {0}")]
    Degenerate(String),

    #[error("invalid permutation plan: {0}")]
    InvalidPlan(String),

    #[error("{0}")]
    InvalidInput(String),

    #[error("singular value decomposition did not converge after {sweeps} sweeps")]
    SvdNotConverged { sweeps: usize },

    #[error("no dictionary pair has both words in the embedding vocabularies")]
    NoAlignedPairs,

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{test} [{target_language}->{attribute_language}]: {source}")]
    InTest {
        test: String,
        target_language: String,
        attribute_language: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
