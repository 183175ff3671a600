//! Losses, optimization and checkpoints.

mod adam;
mod checkpoint;
mod config;
mod loss;
mod trainer;

pub use adam::{clip_group, Adam};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMetadata};
pub use config::{EncoderMode, ModelConfig, Selection, TrainingConfig};
pub use loss::{bce_loss, bce_with_grad, combined_loss, combined_loss_with_grads, LossBreakdown, LossWeights, PROB_EPS};
pub use trainer::{format_log, train, train_text_only, EpochRecord, TextOnlyRun, TrainedModel, LOG_HEADER};
