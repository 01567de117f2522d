use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(&'static str),
    #[error("could not place object {index} after {attempts} attempts")]
    Placement { index: usize, attempts: usize },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape { expected: (usize, usize), got: (usize, usize) },
    #[error("normal matrix is not positive definite (pivot {pivot})")]
    Singular { pivot: usize },
    #[error("empty mask")]
    EmptyMask,
    #[error("mask covers the whole frame")]
    FullMask,
    #[error("action plan is empty")]
    EmptyPlan,
    #[error("rollout of length {len} does not reach check frame {index}")]
    ShortRollout { len: usize, index: usize },
    #[error("training data contains novel-category objects")]
    NovelInTraining,
    #[error("no training points below the error threshold")]
    EmptyRegion,
    #[error("all point pairs are degenerate")]
    DegeneratePairs,
    #[error("dataset is empty")]
    EmptyDataset,
}
