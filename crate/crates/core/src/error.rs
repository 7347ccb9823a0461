use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the tensor-network stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid permutation {order:?} for a rank-{rank} tensor")]
    InvalidPermutation { order: Vec<usize>, rank: usize },

    #[error("invalid index groups {groups:?} for a rank-{rank} tensor")]
    InvalidGroups { groups: Vec<Vec<usize>>, rank: usize },

    #[error("size mismatch: dims {dims:?} describe {expected} elements but {found} are present")]
    Size { dims: Vec<usize>, expected: usize, found: usize },

    #[error("contraction shape mismatch: {0}")]
    ContractionShape(String),

    #[error("axpy addend has dims {found:?}, result has dims {expected:?}")]
    AxpyShape { expected: Vec<usize>, found: Vec<usize> },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid MPO block structure: {0}")]
    MpoShape(String),

    #[error("resource guard exceeded: {0}")]
    Resource(String),

    #[error("internal state error: {0}")]
    InternalState(String),

    #[error("storage error at {path:?}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
