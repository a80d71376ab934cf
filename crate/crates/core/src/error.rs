use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("index {index} out of range 0..{bound} in {op}")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("internal consistency: {0}")]
    Internal(String),

    #[error("state error: {0}")]
    State(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("non-finite loss at epoch {epoch} iteration {iteration}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        iteration: usize,
        detail: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures while decoding a checkpoint container.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("bad magic string: expected GCMT-CKPT, found {0:?}")]
    BadMagic(String),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("truncated checkpoint: missing {0}")]
    Truncated(String),
    #[error("malformed checkpoint line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("parameter {name}: declared {declared} values, found {actual}")]
    Length {
        name: String,
        declared: usize,
        actual: usize,
    },
    #[error("dimension inconsistency: {0}")]
    Dimensions(String),
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Checksum { stored: u64, computed: u64 },
}

/// Failures while parsing a dataset file. Line numbers are 1-based.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty dataset file")]
    Empty,
    #[error("line {line}: malformed header: {message}")]
    Header { line: usize, message: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RowWidth {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: unknown split tag {tag:?}")]
    SplitTag { line: usize, tag: String },
    #[error("line {line}: bad value in column {column}: {value:?}")]
    Value {
        line: usize,
        column: String,
        value: String,
    },
}
