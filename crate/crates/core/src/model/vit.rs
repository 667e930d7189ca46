//! Dual-modality ViT forward pass and the multi-task loss.
//!
//! Token layout of the encoder input (frozen; attention tooling relies on it):
//! class tokens first (distraction, then emotion), then driver patches, then
//! face patches. Absent tasks or modalities are simply skipped, which is how
//! the face-only teacher reuses the same code.

use std::collections::BTreeMap;

use super::config::{LossWeights, ModelConfig, Modality, Task};
use super::params::{self, BlockNames, Params};
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Tape handles of every parameter.
#[derive(Clone, Debug)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    /// Records every parameter as a leaf. Parameters for which `trainable`
    /// returns true get gradients.
    pub fn register(tape: &mut Tape, params: &Params, trainable: impl Fn(&str) -> bool) -> Self {
        let vars = params
            .iter()
            .map(|(name, t)| {
                let mut leaf = t.clone();
                leaf.requires_grad = trainable(name);
                (name.to_string(), tape.leaf(leaf))
            })
            .collect();
        ParamVars { vars }
    }

    pub fn get(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not registered"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Gradients of every trainable parameter after `backward`. Trainable
    /// parameters the loss did not reach get zeros.
    pub fn gradients(&self, tape: &Tape) -> BTreeMap<String, Vec<f64>> {
        self.vars
            .iter()
            .filter(|(_, &v)| tape.value(v).requires_grad)
            .map(|(name, &v)| {
                let g = tape
                    .grad(v)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; tape.value(v).numel()]);
                (name.clone(), g)
            })
            .collect()
    }
}

fn expect_image(image: &Tensor, config: &ModelConfig, modality: Modality) -> Result<(usize, usize)> {
    let res = config
        .resolution(modality)
        .ok_or_else(|| Error::Config(format!("model has no {} input", modality.name())))?;
    let p = config.patch_size;
    if res.height % p != 0 || res.width % p != 0 {
        return Err(Error::Config(format!(
            "{} resolution {res} is not divisible by patch size {p}",
            modality.name()
        )));
    }
    let expected = [config.channels, res.height, res.width];
    if image.shape() != expected {
        return Err(Error::dim(format!(
            "{} image has shape {:?}, expected {expected:?}",
            modality.name(),
            image.shape()
        )));
    }
    Ok((res.height / p, res.width / p))
}

/// Slices a `C×H×W` image into `N×(P²·C)` rows. Patches are ordered
/// left-to-right then top-to-bottom; each row flattens its patch as (c, y, x).
pub fn patchify(image: &Tensor, config: &ModelConfig, modality: Modality) -> Result<Tensor> {
    let (gh, gw) = expect_image(image, config, modality)?;
    let (c, p) = (config.channels, config.patch_size);
    let w = gw * p;
    let src = image.data();
    let h = gh * p;
    let mut data = Vec::with_capacity(src.len());
    for pr in 0..gh {
        for pc in 0..gw {
            for ch in 0..c {
                for py in 0..p {
                    let row = ch * h * w + (pr * p + py) * w + pc * p;
                    data.extend_from_slice(&src[row..row + p]);
                }
            }
        }
    }
    Tensor::new(vec![gh * gw, config.patch_dim()], data)
}

/// Inverse of [`patchify`].
pub fn unpatchify(patches: &Tensor, config: &ModelConfig, modality: Modality) -> Result<Tensor> {
    let (gh, gw) = config
        .grid(modality)
        .ok_or_else(|| Error::Config(format!("model has no {} input", modality.name())))?;
    let (c, p) = (config.channels, config.patch_size);
    if patches.shape() != [gh * gw, config.patch_dim()] {
        return Err(Error::dim(format!("cannot unpatchify {:?}", patches.shape())));
    }
    let (h, w) = (gh * p, gw * p);
    let mut data = vec![0.0; c * h * w];
    let src = patches.data();
    let mut k = 0;
    for pr in 0..gh {
        for pc in 0..gw {
            for ch in 0..c {
                for py in 0..p {
                    let row = ch * h * w + (pr * p + py) * w + pc * p;
                    data[row..row + p].copy_from_slice(&src[k..k + p]);
                    k += p;
                }
            }
        }
    }
    Tensor::new(vec![c, h, w], data)
}

/// Patch embedding of one modality: `patchify(x)·E + b + E_pos`.
pub fn embed(tape: &mut Tape, pv: &ParamVars, image: &Tensor, config: &ModelConfig, modality: Modality) -> Result<Var> {
    let patches = tape.leaf(patchify(image, config, modality)?);
    let x = tape.linear(
        patches,
        pv.get(&params::patch_weight_name(modality)),
        pv.get(&params::patch_bias_name(modality)),
    )?;
    tape.add(x, pv.get(&params::pos_embed_name(modality)))
}

/// Prepends the class tokens to the modality embeddings (in config order).
pub fn assemble_sequence(tape: &mut Tape, pv: &ParamVars, config: &ModelConfig, embeddings: &[Var]) -> Result<Var> {
    let d = config.embed_dim;
    let mut parts = Vec::with_capacity(config.tasks().len() + embeddings.len());
    for task in config.tasks() {
        let token = pv.get(&params::class_token_name(task));
        parts.push(tape.reshape(token, &[1, d])?);
    }
    for &e in embeddings {
        let s = tape.shape(e);
        if s.len() != 2 || s[1] != d {
            return Err(Error::dim(format!("embedding of shape {s:?} does not have width {d}")));
        }
        parts.push(e);
    }
    tape.concat(&parts, 0)
}

/// Output of multi-head self-attention plus the per-head attention matrices.
#[derive(Clone, Debug)]
pub struct MsaOutput {
    pub output: Var,
    /// One `T×T` softmax matrix per head.
    pub attention: Vec<Var>,
}

/// Multi-head self-attention over `z[T×D]` with fused `qkv[D×3D]` and output
/// projection `proj[D×D]`. Head `h` uses columns `h·D_H..(h+1)·D_H` of each of
/// the Q, K and V blocks.
pub fn msa(tape: &mut Tape, z: Var, qkv: Var, proj: Var, config: &ModelConfig) -> Result<MsaOutput> {
    let (d, heads) = (config.embed_dim, config.num_heads);
    if heads == 0 || d % heads != 0 {
        return Err(Error::Config(format!("embed_dim {d} is not divisible by {heads} heads")));
    }
    let dh = d / heads;
    let fused = tape.matmul(z, qkv)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut head_outputs = Vec::with_capacity(heads);
    let mut attention = Vec::with_capacity(heads);
    for h in 0..heads {
        let q = tape.slice(fused, 1, h * dh, dh)?;
        let k = tape.slice(fused, 1, d + h * dh, dh)?;
        let v = tape.slice(fused, 1, 2 * d + h * dh, dh)?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, scale)?;
        let attn = tape.softmax(scores, 1)?;
        head_outputs.push(tape.matmul(attn, v)?);
        attention.push(attn);
    }
    let concat = tape.concat(&head_outputs, 1)?;
    let output = tape.matmul(concat, proj)?;
    Ok(MsaOutput { output, attention })
}

/// Pre-norm encoder block: `z' = MSA(LN(z)) + z`, `out = MLP(LN(z')) + z'`.
pub fn encoder_block(tape: &mut Tape, z: Var, pv: &ParamVars, layer: usize, config: &ModelConfig) -> Result<(Var, MsaOutput)> {
    let n = BlockNames::new(layer);
    let eps = config.ln_eps;
    let normed = tape.layer_norm(z, pv.get(&n.norm1_gamma), pv.get(&n.norm1_beta), eps)?;
    let attn = msa(tape, normed, pv.get(&n.qkv), pv.get(&n.proj), config)?;
    let mid = tape.add(attn.output, z)?;
    let normed = tape.layer_norm(mid, pv.get(&n.norm2_gamma), pv.get(&n.norm2_beta), eps)?;
    let hidden = tape.linear(normed, pv.get(&n.fc1_weight), pv.get(&n.fc1_bias))?;
    let hidden = tape.gelu(hidden)?;
    let mlp = tape.linear(hidden, pv.get(&n.fc2_weight), pv.get(&n.fc2_bias))?;
    Ok((tape.add(mlp, mid)?, attn))
}

/// Images for one forward pass (`C×H×W`, normalized).
#[derive(Clone, Copy, Debug)]
pub struct ModelInput<'a> {
    pub driver: Option<&'a Tensor>,
    pub face: &'a Tensor,
}

/// Tape handles produced by [`forward_on_tape`].
#[derive(Clone, Debug)]
pub struct ForwardVars {
    /// `1×K` logits per task present in the config.
    pub logits: BTreeMap<Task, Var>,
    /// Per layer, per head attention matrices.
    pub attention: Vec<Vec<Var>>,
}

impl ForwardVars {
    pub fn logits(&self, task: Task) -> Option<Var> {
        self.logits.get(&task).copied()
    }
}

/// Full model: embed, assemble, `L` encoder blocks, final LayerNorm of the
/// class tokens, per-task heads.
pub fn forward_on_tape(tape: &mut Tape, pv: &ParamVars, config: &ModelConfig, input: ModelInput<'_>) -> Result<ForwardVars> {
    let mut embeddings = Vec::with_capacity(2);
    for m in config.modalities() {
        let image = match m {
            Modality::Driver => input
                .driver
                .ok_or_else(|| Error::Contract("driver image required by this model".into()))?,
            Modality::Face => input.face,
        };
        embeddings.push(embed(tape, pv, image, config, m)?);
    }
    let mut z = assemble_sequence(tape, pv, config, &embeddings)?;
    let mut attention = Vec::with_capacity(config.depth);
    for layer in 0..config.depth {
        let (next, attn) = encoder_block(tape, z, pv, layer, config)?;
        z = next;
        attention.push(attn.attention);
    }
    let tasks = config.tasks();
    let class_states = tape.slice(z, 0, 0, tasks.len())?;
    let y = tape.layer_norm(
        class_states,
        pv.get(params::FINAL_NORM_GAMMA),
        pv.get(params::FINAL_NORM_BETA),
        config.ln_eps,
    )?;
    let mut logits = BTreeMap::new();
    for (i, &task) in tasks.iter().enumerate() {
        let row = tape.slice(y, 0, i, 1)?;
        let out = tape.linear(
            row,
            pv.get(&params::head_weight_name(task)),
            pv.get(&params::head_bias_name(task)),
        )?;
        logits.insert(task, out);
    }
    Ok(ForwardVars { logits, attention })
}

/// Attention of one layer, all heads: shape `H×T×T`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerAttention {
    /// 1-based layer index.
    pub layer: usize,
    pub heads: Tensor,
}

impl LayerAttention {
    pub fn num_heads(&self) -> usize {
        self.heads.shape()[0]
    }

    pub fn seq_len(&self) -> usize {
        self.heads.shape()[1]
    }

    /// Attention row of `query` under head `head`.
    pub fn row(&self, head: usize, query: usize) -> &[f64] {
        let t = self.seq_len();
        let start = (head * t + query) * t;
        &self.heads.data()[start..start + t]
    }
}

/// Detached result of an inference pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub distraction_logits: Option<Vec<f64>>,
    pub emotion_logits: Vec<f64>,
    pub attention: Option<Vec<LayerAttention>>,
}

impl ForwardOutput {
    pub fn logits(&self, task: Task) -> Option<&[f64]> {
        match task {
            Task::Distraction => self.distraction_logits.as_deref(),
            Task::Emotion => Some(&self.emotion_logits),
        }
    }
}

/// Inference pass without gradients.
pub fn forward(params: &Params, input: ModelInput<'_>, capture_attention: bool) -> Result<ForwardOutput> {
    let config = params.config();
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params, |_| false);
    let fv = forward_on_tape(&mut tape, &pv, config, input)?;
    let read = |task| fv.logits(task).map(|v| tape.value(v).data().to_vec());
    let attention = capture_attention.then(|| collect_attention(&tape, &fv, config));
    let out = ForwardOutput {
        distraction_logits: read(Task::Distraction),
        emotion_logits: read(Task::Emotion).expect("every model has an emotion head"),
        attention,
    };
    if let Some(bad) = out
        .distraction_logits
        .iter()
        .flatten()
        .chain(&out.emotion_logits)
        .find(|v| !v.is_finite())
    {
        return Err(Error::Numeric(format!("non-finite logit {bad}")));
    }
    Ok(out)
}

/// Copies the captured attention matrices off the tape.
pub fn collect_attention(tape: &Tape, fv: &ForwardVars, config: &ModelConfig) -> Vec<LayerAttention> {
    let t = config.seq_len();
    fv.attention
        .iter()
        .enumerate()
        .map(|(i, heads)| {
            let data = heads
                .iter()
                .flat_map(|&v| tape.value(v).data().iter().copied())
                .collect();
            LayerAttention {
                layer: i + 1,
                heads: Tensor::new(vec![heads.len(), t, t], data).expect("attention shape"),
            }
        })
        .collect()
}

/// Which cross-entropy terms enter the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LossTerms {
    /// Weighted sum over every task the model has.
    #[default]
    AllTasks,
    /// Distraction term only (single-task baseline).
    DistractionOnly,
}

/// Class indices for one sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Targets {
    pub distraction: Option<usize>,
    pub emotion: usize,
}

/// `λ_dist·CE(dist) + λ_emo·CE(emo)` over whichever heads are present.
pub fn multitask_loss(
    tape: &mut Tape,
    dist_logits: Option<Var>,
    emo_logits: Var,
    targets: Targets,
    weights: LossWeights,
) -> Result<Var> {
    weights.validate()?;
    let emo = tape.cross_entropy(emo_logits, &[targets.emotion])?;
    let emo = tape.scale(emo, weights.emotion)?;
    match dist_logits {
        Some(logits) => {
            let target = targets
                .distraction
                .ok_or_else(|| Error::Contract("distraction target missing".into()))?;
            let dist = tape.cross_entropy(logits, &[target])?;
            let dist = tape.scale(dist, weights.distraction)?;
            tape.add(dist, emo)
        }
        None => Ok(emo),
    }
}

/// `λ_dist·CE(dist)` alone.
pub fn distraction_loss(tape: &mut Tape, dist_logits: Var, target: usize, weight: f64) -> Result<Var> {
    if !(weight >= 0.0) {
        return Err(Error::Config(format!("loss weight must be nonnegative, got {weight}")));
    }
    let dist = tape.cross_entropy(dist_logits, &[target])?;
    tape.scale(dist, weight)
}

/// Loss of a forward pass under the chosen terms.
pub fn model_loss(tape: &mut Tape, fv: &ForwardVars, targets: Targets, weights: LossWeights, terms: LossTerms) -> Result<Var> {
    match terms {
        LossTerms::AllTasks => multitask_loss(
            tape,
            fv.logits(Task::Distraction),
            fv.logits(Task::Emotion).expect("emotion head"),
            targets,
            weights,
        ),
        LossTerms::DistractionOnly => {
            let logits = fv
                .logits(Task::Distraction)
                .ok_or_else(|| Error::Config("model has no distraction head".into()))?;
            let target = targets
                .distraction
                .ok_or_else(|| Error::Contract("distraction target missing".into()))?;
            distraction_loss(tape, logits, target, weights.distraction)
        }
    }
}
