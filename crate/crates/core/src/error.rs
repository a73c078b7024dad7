use std::io;

use thiserror::Error;

use crate::corpus::EditType;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("corpus contains no parseable records ({skipped} lines skipped)")]
    EmptyCorpus { skipped: usize },

    #[error("cannot build statistics from an empty event list")]
    EmptyStats,

    #[error("events from several datasets passed to one build: {0:?} and {1:?}")]
    MixedDatasets(String, String),

    #[error("character {0:?} is not part of the alphabet")]
    OutsideAlphabet(char),

    #[error("invalid distribution {what}: {reason}")]
    InvalidDistribution { what: String, reason: String },

    #[error("stats file: {0}")]
    StatsFormat(String),

    #[error("unsupported {kind} version {found} (expected {expected})")]
    Version {
        kind: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("fusion weights must be non-negative and sum to 1, got sum {sum}")]
    FusionWeights { sum: f64 },

    #[error("{edit_type} is not applicable here")]
    ResampleType { edit_type: EditType },

    #[error("generation exhausted for {name:?}: {produced} of {wanted} distinct samples after {attempts} attempts")]
    GenerationExhausted {
        name: String,
        produced: usize,
        wanted: usize,
        attempts: usize,
    },

    #[error("invalid generation config: {0}")]
    GenerationConfig(String),

    #[error("catalog entries collide after canonicalization: {0:?}")]
    CatalogCollision(Vec<(String, String)>),

    #[error("catalog entry {0:?} is empty after canonicalization")]
    EmptyCatalogEntry(String),

    #[error("dataset file: {0}")]
    DatasetFormat(String),

    #[error("invalid model config: {0}")]
    ModelConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("catalog entry {0:?} has a zero embedding")]
    ZeroEmbedding(String),

    #[error("query is empty after canonicalization")]
    EmptyQuery,

    #[error("index file: {0}")]
    IndexFormat(String),

    #[error("index was built from checkpoint {index_digest}, but checkpoint {checkpoint_digest} is loaded")]
    StaleIndex {
        index_digest: String,
        checkpoint_digest: String,
    },

    #[error("dictionary is empty")]
    EmptyDictionary,

    #[error("dictionary file line {line}: {reason}")]
    DictionaryFormat { line: usize, reason: String },

    #[error("validation set is empty")]
    EmptyValidation,

    #[error("experiment: {0}")]
    Experiment(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
