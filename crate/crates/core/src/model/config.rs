use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Height and width of one input modality, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Resolution {
    pub height: usize,
    pub width: usize,
}

impl Resolution {
    pub const fn square(side: usize) -> Self {
        Resolution { height: side, width: side }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("resolution must look like HxW, got {s:?}"));
        let (h, w) = s.split_once('x').ok_or_else(bad)?;
        Ok(Resolution {
            height: h.trim().parse().map_err(|_| bad())?,
            width: w.trim().parse().map_err(|_| bad())?,
        })
    }
}

/// Input stream of the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Driver,
    Face,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Driver => "driver",
            Modality::Face => "face",
        }
    }
}

/// Prediction task; each task owns a class token and a head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Distraction,
    Emotion,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Distraction => "distraction",
            Task::Emotion => "emotion",
        }
    }
}

/// Weights of the per-task cross-entropy terms in the combined loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub distraction: f64,
    pub emotion: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { distraction: 1.0, emotion: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.distraction >= 0.0 && self.emotion >= 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be nonnegative, got ({}, {})",
                self.distraction, self.emotion
            )));
        }
        Ok(())
    }
}

/// Architecture hyperparameters.
///
/// The student model has both modalities and both tasks. The emotion teacher
/// is the same architecture with only the face modality and the emotion task,
/// which is expressed by `driver_resolution = None` and
/// `num_distraction_classes = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub depth: usize,
    pub num_heads: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub driver_resolution: Option<Resolution>,
    pub face_resolution: Resolution,
    pub mlp_ratio: usize,
    pub num_distraction_classes: usize,
    pub num_emotion_classes: usize,
    pub loss_weights: LossWeights,
    pub ln_eps: f64,
}

pub const LN_EPS: f64 = 1e-6;

impl ModelConfig {
    /// ViT-B sized configuration: D=768, L=12, H=12, P=16, 224×224 driver and 32×32 face.
    pub fn paper() -> Self {
        ModelConfig {
            embed_dim: 768,
            depth: 12,
            num_heads: 12,
            patch_size: 16,
            channels: 3,
            driver_resolution: Some(Resolution::square(224)),
            face_resolution: Resolution::square(32),
            mlp_ratio: 4,
            num_distraction_classes: 10,
            num_emotion_classes: 8,
            loss_weights: LossWeights::default(),
            ln_eps: LN_EPS,
        }
    }

    /// Small configuration for CPU training: D=32, L=2, H=2, P=4, 16×16 driver, 8×8 face.
    pub fn desk() -> Self {
        ModelConfig {
            embed_dim: 32,
            depth: 2,
            num_heads: 2,
            patch_size: 4,
            driver_resolution: Some(Resolution::square(16)),
            face_resolution: Resolution::square(8),
            ..Self::paper()
        }
    }

    /// Face-only, emotion-only variant used for the teacher (7 emotions, no Non-Face).
    pub fn teacher_of(&self) -> Self {
        ModelConfig {
            driver_resolution: None,
            num_distraction_classes: 0,
            num_emotion_classes: crate::data::NUM_TEACHER_EMOTIONS,
            ..self.clone()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    pub fn mlp_hidden(&self) -> usize {
        self.embed_dim * self.mlp_ratio
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn resolution(&self, modality: Modality) -> Option<Resolution> {
        match modality {
            Modality::Driver => self.driver_resolution,
            Modality::Face => Some(self.face_resolution),
        }
    }

    /// Modalities present, in sequence order.
    pub fn modalities(&self) -> Vec<Modality> {
        let mut out = Vec::with_capacity(2);
        if self.driver_resolution.is_some() {
            out.push(Modality::Driver);
        }
        out.push(Modality::Face);
        out
    }

    /// Tasks present, in class-token order.
    pub fn tasks(&self) -> Vec<Task> {
        let mut out = Vec::with_capacity(2);
        if self.num_distraction_classes > 0 {
            out.push(Task::Distraction);
        }
        out.push(Task::Emotion);
        out
    }

    pub fn num_classes(&self, task: Task) -> usize {
        match task {
            Task::Distraction => self.num_distraction_classes,
            Task::Emotion => self.num_emotion_classes,
        }
    }

    /// Patch grid (rows, cols) of a modality.
    pub fn grid(&self, modality: Modality) -> Option<(usize, usize)> {
        self.resolution(modality)
            .map(|r| (r.height / self.patch_size, r.width / self.patch_size))
    }

    /// Number of patches `N_i = H_i·W_i / P²`, zero for an absent modality.
    pub fn num_patches(&self, modality: Modality) -> usize {
        self.grid(modality).map_or(0, |(r, c)| r * c)
    }

    pub fn total_patches(&self) -> usize {
        self.modalities().iter().map(|&m| self.num_patches(m)).sum()
    }

    /// Sequence length: one class token per task plus all patches.
    pub fn seq_len(&self) -> usize {
        self.tasks().len() + self.total_patches()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("depth", self.depth),
            ("num_heads", self.num_heads),
            ("patch_size", self.patch_size),
            ("channels", self.channels),
            ("mlp_ratio", self.mlp_ratio),
            ("num_emotion_classes", self.num_emotion_classes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.embed_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        for m in self.modalities() {
            let r = self.resolution(m).unwrap();
            if r.height == 0 || r.width == 0 || r.height % self.patch_size != 0 || r.width % self.patch_size != 0 {
                return Err(Error::Config(format!(
                    "{} resolution {r} is not divisible by patch size {}",
                    m.name(),
                    self.patch_size
                )));
            }
        }
        if self.driver_resolution.is_none() && self.num_distraction_classes > 0 {
            return Err(Error::Config("distraction task requires the driver modality".into()));
        }
        if !(self.ln_eps > 0.0) {
            return Err(Error::Config("ln_eps must be positive".into()));
        }
        self.loss_weights.validate()
    }

    /// `key=value` lines in sorted key order; stored in checkpoints.
    pub fn to_record(&self) -> String {
        let mut map = BTreeMap::new();
        map.insert("channels", self.channels.to_string());
        map.insert("depth", self.depth.to_string());
        map.insert(
            "driver_resolution",
            self.driver_resolution.map_or_else(|| "none".to_string(), |r| r.to_string()),
        );
        map.insert("embed_dim", self.embed_dim.to_string());
        map.insert("face_resolution", self.face_resolution.to_string());
        map.insert("lambda_distraction", self.loss_weights.distraction.to_string());
        map.insert("lambda_emotion", self.loss_weights.emotion.to_string());
        map.insert("ln_eps", self.ln_eps.to_string());
        map.insert("mlp_ratio", self.mlp_ratio.to_string());
        map.insert("num_distraction_classes", self.num_distraction_classes.to_string());
        map.insert("num_emotion_classes", self.num_emotion_classes.to_string());
        map.insert("num_heads", self.num_heads.to_string());
        map.insert("patch_size", self.patch_size.to_string());
        map.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn from_record(record: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in record.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line without '=': {line:?}")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut take = |key: &str| {
            map.remove(key)
                .ok_or_else(|| Error::Config(format!("config record is missing {key}")))
        };
        fn num<T: FromStr>(key: &str, v: String) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad value for {key}: {v:?}")))
        }
        let driver = take("driver_resolution")?;
        let config = ModelConfig {
            channels: num("channels", take("channels")?)?,
            depth: num("depth", take("depth")?)?,
            driver_resolution: if driver == "none" { None } else { Some(driver.parse()?) },
            embed_dim: num("embed_dim", take("embed_dim")?)?,
            face_resolution: take("face_resolution")?.parse()?,
            loss_weights: LossWeights {
                distraction: num("lambda_distraction", take("lambda_distraction")?)?,
                emotion: num("lambda_emotion", take("lambda_emotion")?)?,
            },
            ln_eps: num("ln_eps", take("ln_eps")?)?,
            mlp_ratio: num("mlp_ratio", take("mlp_ratio")?)?,
            num_distraction_classes: num("num_distraction_classes", take("num_distraction_classes")?)?,
            num_emotion_classes: num("num_emotion_classes", take("num_emotion_classes")?)?,
            num_heads: num("num_heads", take("num_heads")?)?,
            patch_size: num("patch_size", take("patch_size")?)?,
        };
        if let Some(key) = map.keys().next() {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        config.validate()?;
        Ok(config)
    }
}
