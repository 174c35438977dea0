use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer}: expected {expected}, found {found}")]
    LayerShape {
        layer: usize,
        expected: String,
        found: String,
    },

    #[error("length mismatch for {what}: expected {expected}, found {found}")]
    Length {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("objective returned a non-finite value at iteration {iteration}, candidate {candidate}")]
    NonFiniteObjective { iteration: usize, candidate: usize },

    #[error("candidate {candidate}: {source}")]
    Candidate {
        candidate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged at {unit} {index}: {reason}")]
    Diverged {
        unit: &'static str,
        index: usize,
        reason: String,
    },

    #[error("best-candidate inference requested but the model retains no weight set")]
    MissingBestCandidate,

    #[error("standard deviation must be positive, got {0}")]
    InvalidSigma(f64),

    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("ragged row at line {line}: expected {expected} cells, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },

    #[error("unknown column {0}")]
    UnknownColumn(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("unknown label class {0:?}")]
    UnknownClass(String),
}
