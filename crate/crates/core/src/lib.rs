//! Multi-modal Vision Transformer for driver distraction detection.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`] / [`tape`]: dense `f64` tensors and reverse-mode autodiff.
//! * [`model`]: dual-modality ViT with distraction and emotion class tokens.
//! * [`training`]: AdamW, warmup + cosine schedule, freezing, augmentation, the loop.
//! * [`pipeline`]: teacher training, face cropping, pseudo labels, student manifest.
//! * [`data`] / [`metrics`]: class vocabularies, PPM IO, synthetic data, evaluation.
//! * [`attention`]: class-token attention extraction and heatmaps.

pub mod attention;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
