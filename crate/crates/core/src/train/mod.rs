//! Training with Adam and per-step cross-entropy, dataset splits and metrics.

mod adam;
mod dataset;
mod loss;
mod metrics;
mod split;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use dataset::{DatasetStats, GestureDataset, Sequence};
pub use loss::{cross_entropy_loss, softmax};
pub use metrics::{evaluate, evaluate_logits, Aggregation, Evaluation};
pub use split::{split_cv5, split_kfold, split_loocv};
pub use trainer::{train, train_with, EpochRecord, TrainConfig};
