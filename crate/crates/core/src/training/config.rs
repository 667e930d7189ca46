use crate::error::{Error, Result};
use crate::model::LossTerms;

/// Base learning rate presets of the two driver datasets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetProfile {
    Sfddd,
    Aucdd,
}

impl DatasetProfile {
    pub fn base_lr(self) -> f64 {
        match self {
            DatasetProfile::Sfddd => 0.0003,
            DatasetProfile::Aucdd => 0.0006,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreezePolicy {
    AllTrainable,
    /// Self-attention weights of every block, plus heads and class tokens.
    MsaOnly,
}

impl std::str::FromStr for FreezePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "ALL_TRAINABLE" => Ok(FreezePolicy::AllTrainable),
            "msa-only" | "MSA_ONLY" => Ok(FreezePolicy::MsaOnly),
            other => Err(Error::Config(format!("unknown freeze policy {other:?}"))),
        }
    }
}

impl FreezePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            FreezePolicy::AllTrainable => "all",
            FreezePolicy::MsaOnly => "msa-only",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentConfig {
    /// Pad-then-random-crop back to the input resolution.
    pub crop: bool,
    pub flip: bool,
    /// Accepted for compatibility; has no effect.
    pub three_augment: bool,
    pub pad: usize,
}

impl AugmentConfig {
    pub const OFF: AugmentConfig = AugmentConfig {
        crop: false,
        flip: false,
        three_augment: false,
        pad: 4,
    };

    pub fn is_off(&self) -> bool {
        !self.crop && !self.flip
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub warmup_start_lr: f64,
    pub final_lr: f64,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub freeze: FreezePolicy,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub loss_terms: LossTerms,
}

impl TrainConfig {
    /// Published recipe: AdamW (wd 0.1), 5 warmup epochs from 1e-6, cosine to 0,
    /// 20 epochs, batch 256, MSA-only fine-tuning, crop + flip.
    pub fn paper(profile: DatasetProfile) -> Self {
        TrainConfig {
            base_lr: profile.base_lr(),
            warmup_epochs: 5,
            warmup_start_lr: 1e-6,
            final_lr: 0.0,
            total_epochs: 20,
            batch_size: 256,
            weight_decay: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            freeze: FreezePolicy::MsaOnly,
            seed: 0,
            augment: AugmentConfig {
                crop: true,
                flip: true,
                three_augment: profile == DatasetProfile::Sfddd,
                pad: 4,
            },
            loss_terms: LossTerms::AllTasks,
        }
    }

    /// From-scratch CPU training of the small student model.
    pub fn desk() -> Self {
        TrainConfig {
            base_lr: 0.001,
            total_epochs: 200,
            batch_size: 2,
            freeze: FreezePolicy::AllTrainable,
            augment: AugmentConfig::OFF,
            ..Self::paper(DatasetProfile::Sfddd)
        }
    }

    /// From-scratch CPU training of the small face-only teacher.
    pub fn desk_teacher() -> Self {
        TrainConfig {
            base_lr: 0.002,
            total_epochs: 300,
            batch_size: 16,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("base_lr", self.base_lr),
            ("warmup_start_lr", self.warmup_start_lr),
            ("final_lr", self.final_lr),
            ("weight_decay", self.weight_decay),
            ("eps", self.eps),
        ];
        if let Some((name, v)) = rates.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("{name} must be a nonnegative number, got {v}")));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if self.total_epochs > 0 && self.warmup_epochs >= self.total_epochs {
            return Err(Error::Config(format!(
                "warmup_epochs ({}) must be smaller than total_epochs ({})",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}
