use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("duplicate example id '{0}'")]
    DuplicateId(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty text")]
    EmptyText,

    #[error("batch element {index} failed: {source}")]
    BatchElement {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("document '{doc_id}': {source}")]
    Document {
        doc_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in embedding vector")]
    NonFinite,

    #[error("undefined similarity: zero-norm vector")]
    UndefinedSimilarity,

    #[error("duplicate doc_id '{0}'")]
    DuplicateDocId(String),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("corrupt index file: {0}")]
    CorruptIndex(String),

    #[error("index format version mismatch: file has version {found}, this build reads version {expected}")]
    VersionMismatch { found: String, expected: String },

    #[error("no evidence corpus")]
    NoEvidenceCorpus,

    #[error("no evidence")]
    NoEvidence,

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("endpoint returned an empty completion")]
    EmptyCompletion,

    #[error("answer list is empty")]
    EmptyAnswers,

    #[error("cannot aggregate an empty score list")]
    EmptyScores,

    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),

    #[error("unknown stage '{0}'")]
    UnknownStage(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("manifest schema mismatch: found '{found}', expected '{expected}'")]
    SchemaVersion { found: String, expected: String },

    #[error("replayed {metric} = {replayed} does not match stored {stored}")]
    AggregateMismatch {
        metric: String,
        stored: f64,
        replayed: f64,
    },

    #[error("run failed: {failed} of {total} questions errored")]
    RunFailed { failed: usize, total: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
