//! The ViT-DD architecture.

pub mod checkpoint;
pub mod config;
pub mod params;
pub mod vit;

pub use config::{LossWeights, ModelConfig, Modality, Resolution, Task};
pub use params::Params;
pub use vit::{
    forward, forward_on_tape, model_loss, multitask_loss, patchify, unpatchify, ForwardOutput, ForwardVars,
    LayerAttention, LossTerms, ModelInput, ParamVars, Targets,
};
