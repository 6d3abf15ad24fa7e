use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid sequence encoding at row {row}: {reason}")]
    InvalidEncoding { row: usize, reason: String },

    #[error("dispatch list is not a permutation: {0}")]
    NotAPermutation(String),

    #[error("dispatch list has {got} entries but the instance has {expected} operations")]
    LengthMismatch { got: usize, expected: usize },

    #[error(
        "infeasible dispatch list: job {job} operation {later_pos} placed at list index \
         {list_index} before operation {earlier_pos}"
    )]
    Infeasible {
        job: usize,
        earlier_pos: usize,
        later_pos: usize,
        list_index: usize,
    },

    #[error("parse error at line {line}, column {col}: {reason}")]
    Parse {
        line: usize,
        col: usize,
        reason: String,
    },

    #[error("mask contract violated: row {row} in lane {lane} is not selectable")]
    MaskContract { lane: usize, row: usize },

    #[error("gap is undefined for non-positive optimum {0}")]
    NonPositiveOptimum(i64),
}
