use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("every Gaussian was pruned; the registered scene would be empty")]
    EmptyScene,

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("corrupt code: index {index} in sub-space {subspace} exceeds centroid count {k}")]
    CorruptCode { subspace: usize, index: usize, k: usize },

    #[error("degenerate code: normalization denominator is zero")]
    DegenerateCode,

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("scene spec error: {0}")]
    Spec(String),

    #[error("malformed {format} file: {reason}")]
    Format { format: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
