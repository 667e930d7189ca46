//! Mini-batch training loop.
//!
//! Gradients are computed per sample on worker threads and reduced in batch
//! order on the calling thread, so results do not depend on the thread count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::adamw::{adamw_step, AdamWConfig, OptimizerState};
use super::augment::augment;
use super::config::TrainConfig;
use super::freeze::apply_freeze_policy;
use super::schedule::lr_at;
use crate::data::manifest::write_file;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::model::checkpoint;
use crate::model::{forward_on_tape, model_loss, Modality, ModelInput, ParamVars, Params};
use crate::seed::rng_from;
use crate::tape::Tape;
use crate::tensor::Tensor;

pub const HISTORY_HEADER: &str = "epoch,split,distraction_acc,emotion_acc,nll,mean_lr";

/// One row of the metrics history.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: String,
    pub distraction_acc: Option<f64>,
    pub emotion_acc: Option<f64>,
    pub nll: f64,
    pub mean_lr: f64,
}

impl EpochMetrics {
    fn from_report(epoch: usize, split: &str, report: &EvalReport, mean_lr: f64) -> Self {
        let dist = report.distraction.as_ref();
        let emo = report.emotion.as_ref();
        EpochMetrics {
            epoch,
            split: split.to_string(),
            distraction_acc: dist.map(|r| r.accuracy),
            emotion_acc: emo.map(|r| r.accuracy),
            nll: dist.or(emo).map_or(f64::NAN, |r| r.nll),
            mean_lr,
        }
    }

    /// Distraction accuracy when the model has that task, emotion otherwise.
    pub fn primary_accuracy(&self) -> f64 {
        self.distraction_acc.or(self.emotion_acc).unwrap_or(0.0)
    }
}

pub fn encode_history(rows: &[EpochMetrics]) -> String {
    let opt = |v: Option<f64>| v.map(|a| format!("{a:.6}")).unwrap_or_default();
    let mut out = format!("{HISTORY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.9}",
            r.epoch,
            r.split,
            opt(r.distraction_acc),
            opt(r.emotion_acc),
            r.nll,
            r.mean_lr
        );
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Where `history.csv`, `final.ckpt` and `best.ckpt` go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    /// Worker threads; 0 picks rayon's default.
    pub threads: usize,
    /// Include pseudo-labeled emotions in the per-epoch train metrics.
    pub include_pseudo: bool,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub params: Params,
    pub best_params: Params,
    pub history: Vec<EpochMetrics>,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// Mean loss over the batch before the update.
    pub loss: f64,
    /// Mean gradient per trainable parameter.
    pub grads: BTreeMap<String, Vec<f64>>,
    pub lr: f64,
}

/// Loss and gradients of a single sample, with `trainable` parameters as
/// the only differentiable leaves.
pub fn sample_gradients(
    params: &Params,
    trainable: &BTreeSet<String>,
    driver: Option<&Tensor>,
    sample: &Sample,
    config: &TrainConfig,
) -> Result<(f64, BTreeMap<String, Vec<f64>>)> {
    let model = params.config();
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params, |n| trainable.contains(n));
    let input = ModelInput { driver, face: &sample.face };
    let fv = forward_on_tape(&mut tape, &pv, model, input)?;
    let loss = model_loss(&mut tape, &fv, sample.targets, model.loss_weights, config.loss_terms)?;
    let value = tape.value(loss).item();
    tape.backward(loss)?;
    Ok((value, pv.gradients(&tape)))
}

pub fn build_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))
}

/// Optimizer plus everything needed to take steps.
pub struct Trainer {
    pub params: Params,
    pub config: TrainConfig,
    pub trainable: BTreeSet<String>,
    pub state: OptimizerState,
    pub step: usize,
    pub steps_per_epoch: usize,
    pool: rayon::ThreadPool,
}

impl Trainer {
    pub fn new(params: Params, config: TrainConfig, steps_per_epoch: usize, threads: usize) -> Result<Self> {
        config.validate()?;
        params.config().validate()?;
        let trainable = apply_freeze_policy(&params, config.freeze);
        Ok(Trainer {
            params,
            config,
            trainable,
            state: OptimizerState::default(),
            step: 0,
            steps_per_epoch: steps_per_epoch.max(1),
            pool: build_pool(threads)?,
        })
    }

    fn driver_for(&self, sample: &Sample, epoch: Option<usize>) -> Result<Option<Tensor>> {
        let Some(driver) = &sample.driver else { return Ok(None) };
        match epoch {
            Some(epoch) if !self.config.augment.is_off() => {
                let target = self.params.config().resolution(Modality::Driver).expect("driver modality");
                let mut rng = rng_from(self.config.seed, &["augment", &sample.sample_id, &epoch.to_string()]);
                Ok(Some(augment(driver, &mut rng, &self.config.augment, target)?))
            }
            _ => Ok(Some(driver.clone())),
        }
    }

    /// Mean loss and gradients of a batch without updating anything.
    pub fn batch_gradients(&self, batch: &[&Sample], epoch: Option<usize>) -> Result<(f64, BTreeMap<String, Vec<f64>>)> {
        if batch.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let per_sample: Vec<(f64, BTreeMap<String, Vec<f64>>)> = self.pool.install(|| {
            batch
                .par_iter()
                .map(|s| {
                    let driver = self.driver_for(s, epoch)?;
                    sample_gradients(&self.params, &self.trainable, driver.as_ref(), s, &self.config)
                })
                .collect::<Result<_>>()
        })?;
        let inv = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut total: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (l, grads) in per_sample {
            loss += l;
            for (name, g) in grads {
                match total.get_mut(&name) {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => {
                        total.insert(name, g);
                    }
                }
            }
        }
        for g in total.values_mut() {
            g.iter_mut().for_each(|v| *v *= inv);
        }
        Ok((loss * inv, total))
    }

    /// One optimizer step on `batch`.
    pub fn step(&mut self, batch: &[&Sample], epoch: Option<usize>) -> Result<StepOutcome> {
        let lr = lr_at(self.step, self.steps_per_epoch, &self.config);
        let (loss, grads) = self.batch_gradients(batch, epoch)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss {loss} at step {} (lr {lr:e})",
                self.step
            )));
        }
        adamw_step(&mut self.params, &grads, &mut self.state, lr, &AdamWConfig::from(&self.config))?;
        self.step += 1;
        Ok(StepOutcome { loss, grads, lr })
    }

    /// Runs `f` on this trainer's worker pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

fn save_outputs(dir: &Path, history: &[EpochMetrics], last: &Params, best: &Params) -> Result<()> {
    write_file(&dir.join("history.csv"), encode_history(history).as_bytes())?;
    checkpoint::save(last, &dir.join("final.ckpt"))?;
    checkpoint::save(best, &dir.join("best.ckpt"))
}

/// Trains `params` on `samples`; each epoch is followed by an evaluation on
/// the training set (and on `val` when given) which feeds the history and the
/// best-checkpoint choice.
pub fn train_loop(
    samples: &[Sample],
    val: Option<&[Sample]>,
    params: Params,
    config: &TrainConfig,
    options: &TrainOptions,
) -> Result<TrainResult> {
    if samples.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let steps_per_epoch = samples.len().div_ceil(config.batch_size);
    let mut trainer = Trainer::new(params, config.clone(), steps_per_epoch, options.threads)?;
    let mut history = Vec::new();
    let mut best = (f64::NEG_INFINITY, trainer.params.clone());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..config.total_epochs {
        order.sort_unstable();
        order.shuffle(&mut rng_from(config.seed, &["shuffle", &epoch.to_string()]));
        let mut lr_sum = 0.0;
        let mut losses = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let out = trainer.step(&batch, Some(epoch))?;
            lr_sum += out.lr;
            losses += out.loss;
        }
        let mean_lr = lr_sum / steps_per_epoch as f64;
        let train_report = trainer.install(|| evaluate(&trainer.params, samples, options.include_pseudo))?;
        let train_row = EpochMetrics::from_report(epoch + 1, "train", &train_report, mean_lr);
        let mut score = train_row.primary_accuracy();
        log::info!(
            "epoch {:>3}  loss {:.4}  dist_acc {}  emo_acc {}  lr {:.3e}",
            epoch + 1,
            losses / steps_per_epoch as f64,
            fmt_acc(train_row.distraction_acc),
            fmt_acc(train_row.emotion_acc),
            mean_lr
        );
        history.push(train_row);
        if let Some(val) = val.filter(|v| !v.is_empty()) {
            let report = trainer.install(|| evaluate(&trainer.params, val, false))?;
            let row = EpochMetrics::from_report(epoch + 1, "val", &report, mean_lr);
            score = row.primary_accuracy();
            history.push(row);
        }
        if score > best.0 {
            best = (score, trainer.params.clone());
        }
    }
    let result = TrainResult {
        best_params: best.1,
        params: trainer.params,
        history,
    };
    if let Some(dir) = &options.out_dir {
        save_outputs(dir, &result.history, &result.params, &result.best_params)?;
    }
    Ok(result)
}

fn fmt_acc(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |a| format!("{a:.4}"))
}
