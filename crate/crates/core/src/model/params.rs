//! Named parameter registry.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ModelConfig, Modality, Task};
use crate::error::{Error, Result};
use crate::seed::rng_from;
use crate::tensor::Tensor;

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    TruncNormal,
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn spec(name: impl Into<String>, shape: Vec<usize>, init: Init) -> ParamSpec {
    ParamSpec { name: name.into(), shape, init }
}

pub fn class_token_name(task: Task) -> String {
    format!("class_tokens.{}", task.name())
}

pub fn patch_weight_name(m: Modality) -> String {
    format!("patch_embed.{}.weight", m.name())
}

pub fn patch_bias_name(m: Modality) -> String {
    format!("patch_embed.{}.bias", m.name())
}

pub fn pos_embed_name(m: Modality) -> String {
    format!("pos_embed.{}", m.name())
}

pub fn head_weight_name(task: Task) -> String {
    format!("heads.{}.weight", task.name())
}

pub fn head_bias_name(task: Task) -> String {
    format!("heads.{}.bias", task.name())
}

/// Parameter names of encoder block `layer` (0-based).
#[derive(Clone, Debug)]
pub struct BlockNames {
    pub norm1_gamma: String,
    pub norm1_beta: String,
    pub qkv: String,
    pub proj: String,
    pub norm2_gamma: String,
    pub norm2_beta: String,
    pub fc1_weight: String,
    pub fc1_bias: String,
    pub fc2_weight: String,
    pub fc2_bias: String,
}

impl BlockNames {
    pub fn new(layer: usize) -> Self {
        let p = format!("blocks.{layer}");
        BlockNames {
            norm1_gamma: format!("{p}.norm1.gamma"),
            norm1_beta: format!("{p}.norm1.beta"),
            qkv: format!("{p}.msa.qkv"),
            proj: format!("{p}.msa.proj"),
            norm2_gamma: format!("{p}.norm2.gamma"),
            norm2_beta: format!("{p}.norm2.beta"),
            fc1_weight: format!("{p}.mlp.fc1.weight"),
            fc1_bias: format!("{p}.mlp.fc1.bias"),
            fc2_weight: format!("{p}.mlp.fc2.weight"),
            fc2_bias: format!("{p}.mlp.fc2.bias"),
        }
    }
}

pub const FINAL_NORM_GAMMA: &str = "final_norm.gamma";
pub const FINAL_NORM_BETA: &str = "final_norm.beta";

/// Every parameter the configuration needs, sorted by name.
pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let d = config.embed_dim;
    let mut specs = Vec::new();
    for task in config.tasks() {
        specs.push(spec(class_token_name(task), vec![d], Init::TruncNormal));
        let k = config.num_classes(task);
        specs.push(spec(head_weight_name(task), vec![d, k], Init::TruncNormal));
        specs.push(spec(head_bias_name(task), vec![k], Init::Zeros));
    }
    for m in config.modalities() {
        specs.push(spec(patch_weight_name(m), vec![config.patch_dim(), d], Init::TruncNormal));
        specs.push(spec(patch_bias_name(m), vec![d], Init::Zeros));
        specs.push(spec(pos_embed_name(m), vec![config.num_patches(m), d], Init::TruncNormal));
    }
    let hidden = config.mlp_hidden();
    for layer in 0..config.depth {
        let n = BlockNames::new(layer);
        specs.push(spec(n.norm1_gamma, vec![d], Init::Ones));
        specs.push(spec(n.norm1_beta, vec![d], Init::Zeros));
        specs.push(spec(n.qkv, vec![d, 3 * d], Init::TruncNormal));
        specs.push(spec(n.proj, vec![d, d], Init::TruncNormal));
        specs.push(spec(n.norm2_gamma, vec![d], Init::Ones));
        specs.push(spec(n.norm2_beta, vec![d], Init::Zeros));
        specs.push(spec(n.fc1_weight, vec![d, hidden], Init::TruncNormal));
        specs.push(spec(n.fc1_bias, vec![hidden], Init::Zeros));
        specs.push(spec(n.fc2_weight, vec![hidden, d], Init::TruncNormal));
        specs.push(spec(n.fc2_bias, vec![d], Init::Zeros));
    }
    specs.push(spec(FINAL_NORM_GAMMA, vec![d], Init::Ones));
    specs.push(spec(FINAL_NORM_BETA, vec![d], Init::Zeros));
    specs.sort_by(|a, b| a.name.cmp(&b.name));
    specs
}

fn trunc_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    let normal = Normal::new(0.0, std).expect("positive std");
    loop {
        let v: f64 = normal.sample(rng);
        if v.abs() <= 2.0 * std {
            return v;
        }
    }
}

/// The full learnable parameter set, keyed by stable names.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    config: ModelConfig,
    tensors: BTreeMap<String, Tensor>,
}

impl Params {
    /// Standard initialization: truncated normal (σ=0.02) for projections,
    /// embeddings and class tokens, zeros for biases, ones/zeros for LayerNorm.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from(seed, &["init"]);
        let tensors = param_specs(config)
            .into_iter()
            .map(|s| {
                let mut t = match s.init {
                    Init::Zeros => Tensor::zeros(&s.shape),
                    Init::Ones => Tensor::ones(&s.shape),
                    Init::TruncNormal => Tensor::zeros(&s.shape),
                };
                if s.init == Init::TruncNormal {
                    t.data_mut().iter_mut().for_each(|v| *v = trunc_normal(&mut rng, INIT_STD));
                }
                (s.name, t)
            })
            .collect();
        Ok(Params { config: config.clone(), tensors })
    }

    /// Every entry drawn independently from N(base, std) where base is 1 for
    /// LayerNorm scales and 0 otherwise. Used to build generic test instances.
    pub fn random(config: &ModelConfig, seed: u64, std: f64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from(seed, &["random-params"]);
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let tensors = param_specs(config)
            .into_iter()
            .map(|s| {
                let base = if s.init == Init::Ones { 1.0 } else { 0.0 };
                let mut t = Tensor::zeros(&s.shape);
                t.data_mut().iter_mut().for_each(|v| *v = base + normal.sample(&mut rng));
                (s.name, t)
            })
            .collect();
        Ok(Params { config: config.clone(), tensors })
    }

    /// Wraps existing tensors, checking names and shapes against the config.
    pub fn from_tensors(config: &ModelConfig, tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(config);
        for s in &specs {
            match tensors.get(&s.name) {
                None => return Err(Error::Config(format!("missing parameter {}", s.name))),
                Some(t) if t.shape() != s.shape.as_slice() => {
                    return Err(Error::Config(format!(
                        "parameter {} has shape {:?}, expected {:?}",
                        s.name,
                        t.shape(),
                        s.shape
                    )))
                }
                Some(t) => t.validate()?,
            }
        }
        if tensors.len() != specs.len() {
            let extra = tensors
                .keys()
                .find(|k| !specs.iter().any(|s| &s.name == *k))
                .cloned()
                .unwrap_or_default();
            return Err(Error::Config(format!("unexpected parameter {extra}")));
        }
        Ok(Params { config: config.clone(), tensors })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    /// Parameter by name; panics if absent (names come from the registry).
    pub fn tensor(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }
}
