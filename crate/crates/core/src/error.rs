use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
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

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("dimension mismatch for '{id}': expected {expected}, found {found}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite component in vector '{id}'")]
    NonFinite { id: String },

    #[error("zero vector '{id}' has no direction")]
    ZeroVector { id: String },

    #[error("duplicate id '{id}'")]
    DuplicateId { id: String },

    #[error("missing embeddings for {} id(s): {}", ids.len(), ids.join(", "))]
    MissingEmbeddings { ids: Vec<String> },

    #[error("invalid sample '{id}': {reason}")]
    InvalidSample { id: String, reason: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("missing {feature} score for image '{image}'")]
    MissingScore { feature: String, image: String },

    #[error("feature count mismatch: expected {expected}, found {found}")]
    FeatureCountMismatch { expected: usize, found: usize },

    #[error("training data has no labeled groups")]
    NoLabeledGroups,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("vector dimensions differ: {0} vs {1}")]
    VectorLength(usize, usize),

    #[error("cosine similarity undefined for a zero vector")]
    UndefinedSimilarity,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.to_string(),
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Short stable identifier for the error class, used in CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Format { .. } => "format",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFinite { .. } => "non_finite",
            Error::ZeroVector { .. } => "zero_vector",
            Error::DuplicateId { .. } => "duplicate_id",
            Error::MissingEmbeddings { .. } => "missing_embeddings",
            Error::InvalidSample { .. } => "invalid_sample",
            Error::EmptyDataset => "empty_dataset",
            Error::EmptyCorpus => "empty_corpus",
            Error::MissingScore { .. } => "missing_score",
            Error::FeatureCountMismatch { .. } => "feature_count_mismatch",
            Error::NoLabeledGroups => "no_labeled_groups",
            Error::Config(_) => "config",
            Error::VectorLength(..) => "vector_length",
            Error::UndefinedSimilarity => "undefined_similarity",
        }
    }
}
