//! Objective, negative sampling, Adam, and the training loop.

mod adam;
mod objective;
mod sampling;
mod trainer;

pub use adam::{adam_step, clip_global_norm, global_norm, AdamState};
pub use objective::{loss, loss_var};
pub use sampling::{sample_training_set, TrainingExample, DEFAULT_NEGATIVES};
pub use trainer::{
    example_gradients, kl_weight, metrics_csv, train, EpochMetrics, ExampleOutcome, PreparedExample, TrainOptions,
};

use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("query `{query}` has only {available} non-relevant documents, {needed} negatives requested")]
    CorpusTooSmall {
        query: String,
        needed: usize,
        available: usize,
    },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("gradient for unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("score {0} is outside (0, 1)")]
    ScoreOutOfRange(f64),
    #[error("expected {expected} KL terms, got {got}")]
    KlCount { expected: usize, got: usize },
    #[error("training: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
