use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("triplet ({anchor}, {positive}, {negative}) out of range for {len} latent examples")]
    TripletOutOfRange {
        anchor: usize,
        positive: usize,
        negative: usize,
        len: usize,
    },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("non-finite loss after outer iteration {0}")]
    NonFiniteLoss(usize),

    #[error("{0}")]
    Format(String),

    #[error("csv row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
