//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("empty input set")]
    EmptySet,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("knee detection needs at least 3 points, got {0}")]
    TooFewPoints(usize),

    #[error("degenerate distribution: all counts equal")]
    DegenerateDistribution,

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("shape mismatch: {context} (left {left_rows}x{left_cols}, right {right_rows}x{right_cols})")]
    ShapeError {
        context: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("degenerate matrix: non-positive mean diagonal")]
    DegenerateMatrix,

    #[error("token id {0} outside vocabulary of size {1}")]
    VocabError(u32, usize),

    #[error("sequence length {0} exceeds max_seq_len {1}")]
    SequenceOverflow(usize, usize),

    #[error("weight file checksum mismatch")]
    ChecksumError,

    #[error("weight file version {found} not supported (expected {expected})")]
    VersionError { found: u32, expected: u32 },

    #[error("malformed weight file: {0}")]
    FormatError(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    /// Stable process exit code for the CLI: 3 invalid-param, 4 IO, 5 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            CoreError::InvalidParam(_)
            | CoreError::EmptySet
            | CoreError::TooFewPoints(_)
            | CoreError::VocabError(..)
            | CoreError::SequenceOverflow(..) => 3,
            CoreError::Io(_)
            | CoreError::ChecksumError
            | CoreError::VersionError { .. }
            | CoreError::FormatError(_) => 4,
            _ => 5,
        }
    }
}
