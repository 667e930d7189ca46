//! Optimization: AdamW, learning-rate schedule, freezing, augmentation, loop.

pub mod adamw;
pub mod augment;
pub mod config;
pub mod freeze;
pub mod schedule;
pub mod trainer;

pub use adamw::{adamw_step, AdamWConfig, Moments, OptimizerState};
pub use augment::{augment, augment_with, hflip};
pub use config::{AugmentConfig, DatasetProfile, FreezePolicy, TrainConfig};
pub use freeze::apply_freeze_policy;
pub use schedule::lr_at;
pub use trainer::{
    encode_history, sample_gradients, train_loop, EpochMetrics, StepOutcome, TrainOptions, TrainResult, Trainer,
};
