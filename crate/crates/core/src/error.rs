use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimMismatch { op: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("loss must be a 1x1 scalar, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("non-finite loss at sentence {sentence}")]
    NonFiniteLoss { sentence: usize },

    #[error("line count mismatch: {source_lines} source lines vs {target_lines} target lines")]
    LineCountMismatch {
        source_lines: usize,
        target_lines: usize,
    },

    #[error("{path}:{line}: empty line")]
    EmptyLine { path: PathBuf, line: usize },

    #[error("{path}:{line}: invalid UTF-8")]
    InvalidUtf8 { path: PathBuf, line: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model file line {line}: {msg}")]
    ModelFormat { line: usize, msg: String },

    #[error("vocab file line {line}: {msg}")]
    VocabFormat { line: usize, msg: String },

    #[error("n-best line {line}: {msg}")]
    NBestFormat { line: usize, msg: String },

    #[error("sentence {sentence}: missing feature `{name}`")]
    MissingFeature { sentence: usize, name: String },

    #[error("count mismatch: {0} candidates vs {1} references")]
    CountMismatch(usize, usize),

    #[error("empty tuning grid")]
    EmptyGrid,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
