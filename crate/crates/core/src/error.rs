use thiserror::Error;

use crate::data::idx::IdxError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArch(String),

    #[error("input shape mismatch: expected length {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error("not enough samples of digit {digit}: need {needed}, have {available} (short by {})", needed - available)]
    InsufficientSamples { digit: u8, needed: usize, available: usize },

    #[error("degenerate density of classifiers: {0}")]
    DegenerateDoc(String),

    #[error("fraction of good classifiers is zero; the exponential bound divides by it")]
    ZeroGoodFraction,

    #[error("every trial in the batch exhausted its draw budget")]
    EmptyBatch,

    #[error("insufficient data: need at least {needed} usable items, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("worker pool: {0}")]
    Pool(String),
}
