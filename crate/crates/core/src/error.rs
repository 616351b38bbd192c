use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point set needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("point set contains duplicate points (minimum pairwise distance is 0)")]
    DuplicatePoints,

    #[error("all points are identical; the enclosing cube is undefined")]
    DegeneratePointSet,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid point set: {0}")]
    InvalidPointSet(String),

    #[error("block count {blocks} does not divide dimension {dim}")]
    BlockMismatch { blocks: usize, dim: usize },

    #[error("corrupt sketch at byte {offset}: {reason}")]
    CorruptSketch { offset: usize, reason: String },

    #[error("unsupported sketch version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("leaf ordinal {leaf} out of range (tree has {leaves} leaves)")]
    LeafOutOfRange { leaf: usize, leaves: usize },

    #[error("point index {index} out of range (n = {n})")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("padding amplification exhausted after {retries} retries with {remaining} points left")]
    AmplificationExhausted { retries: usize, remaining: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("requested {count} queries from {n} points")]
    CountTooLarge { count: usize, n: usize },

    #[error("malformed record at byte {offset}: {reason}")]
    MalformedRecord { offset: u64, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found} (record {record})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        record: usize,
    },

    #[error("bad magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic { found: u32, expected: u32 },

    #[error("vector {index} has zero norm and cannot be normalized")]
    NormZero { index: usize },

    #[error("parse error at line {line}: {reason}")]
    ParseError { line: u64, reason: String },

    #[error("shape mismatch for {name}: expected {expected_n}x{expected_d}, loaded {n}x{d}")]
    ShapeMismatch {
        name: String,
        expected_n: usize,
        expected_d: usize,
        n: usize,
        d: usize,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    IoRaw(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn corrupt(offset: usize, reason: impl Into<String>) -> Self {
        Error::CorruptSketch {
            offset,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
