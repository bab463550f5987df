//! Class-weighted one-vs-one linear SVMs.

mod ovo;
mod standardise;
pub mod svm;

use thiserror::Error;

pub use ovo::{
    class_weights, nested_select, train_pairs, BinarySvm, OvoModel, Prediction, Selection,
    COST_GRID,
};
pub use standardise::Standardiser;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("binary problem contains a single class")]
    SingleClassData,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("class index {0} out of range")]
    InvalidClass(usize),
    #[error("cost grid is empty")]
    EmptyGrid,
    #[error("malformed model file: {0}")]
    Parse(String),
}
