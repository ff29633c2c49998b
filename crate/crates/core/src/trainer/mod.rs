//! Threshold learning with a frozen parent, and the weight-trained baselines.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod loss;
pub mod surrogate;
pub mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::Checkpoint;
pub use config::TrainConfig;
pub use data::{
    idx_dataset, parse_idx_images, parse_idx_labels, synthetic, synthetic_split, Dataset, IdxImages,
    SyntheticTask,
};
pub use loss::{
    batch_loss, loss_and_grads, loss_and_grads_with, threshold_reg, Activation, Batch, GateMode,
    LossReport,
};
pub use surrogate::{ramp, surrogate_grad, SurrogateSpec};
pub use train::{
    attach_head, evaluate, magnitude_prune_mask, train_finetuned, train_parent, train_pruned,
    train_thresholds, train_weights, EpochMetrics, Evaluation, ThresholdTraining, WeightTraining,
};
