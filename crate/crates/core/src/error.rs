use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("trigram id {id} out of range for vocabulary of size {vocab_size}")]
    TrigramOutOfRange { id: usize, vocab_size: usize },

    #[error("query of length {len} exceeds maximum length {max_len}")]
    QueryTooLong { len: usize, max_len: usize },

    #[error("empty query")]
    EmptyQuery,

    #[error("query id {0} not found")]
    UnknownQuery(usize),

    #[error("empty sample set: {0}")]
    EmptySamples(&'static str),

    #[error("node {node} has only {available} non-neighbours, {requested} requested")]
    InsufficientNonNeighbors {
        node: usize,
        available: usize,
        requested: usize,
    },

    #[error("store holds {available} entries, {requested} requested")]
    StoreTooSmall { available: usize, requested: usize },

    #[error("non-positive variance {value} at index {index}")]
    NonPositiveVariance { index: usize, value: f64 },

    #[error("Bray-Curtis distance undefined for two all-zero vectors")]
    ZeroVectors,

    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("insufficient counts: {0}")]
    InsufficientCounts(String),

    #[error("model rejected: {0}")]
    ModelRejected(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
