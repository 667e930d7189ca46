//! Class vocabularies, image IO, manifests, synthetic data and splits.

pub mod classes;
pub mod dataset;
pub mod image;
pub mod manifest;
pub mod split;
pub mod synth;

pub use classes::{
    DistractionClass, EmotionClass, NON_FACE, NUM_DISTRACTION_CLASSES, NUM_EMOTION_CLASSES, NUM_TEACHER_EMOTIONS,
};
pub use dataset::{load_fer_samples, load_samples, Sample};
pub use image::{load_image, save_image, RgbImage};
pub use manifest::{Manifest, ManifestRecord, Provenance};
pub use split::split_by_driver;
pub use synth::{generate_synthetic, SynthSpec, SynthSummary};
