//! Accuracy, negative log-likelihood and confusion matrices.

use rayon::prelude::*;

use crate::data::{Provenance, Sample};
use crate::error::{Error, Result};
use crate::model::{forward, ModelInput, Params, Task};

/// Counts indexed `[true][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { classes, counts: vec![0; classes * classes] }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskReport {
    pub accuracy: f64,
    /// Mean natural-log NLL of the true class.
    pub nll: f64,
    pub confusion: ConfusionMatrix,
    /// `None` for classes without samples.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub distraction: Option<TaskReport>,
    /// Absent when no sample qualified (e.g. all pseudo-labeled).
    pub emotion: Option<TaskReport>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `log Σ exp(x)` computed stably.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Report from per-sample logits and targets, summed in input order.
pub fn report_from_logits(logits: &[Vec<f64>], targets: &[usize], classes: usize) -> Result<TaskReport> {
    if logits.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }
    if logits.len() != targets.len() {
        return Err(Error::dim(format!("{} logit rows for {} targets", logits.len(), targets.len())));
    }
    let mut confusion = ConfusionMatrix::new(classes);
    let mut nll = 0.0;
    for (row, (l, &t)) in logits.iter().zip(targets).enumerate() {
        if l.len() != classes {
            return Err(Error::dim(format!("row {row} has {} logits, expected {classes}", l.len())));
        }
        if t >= classes {
            return Err(Error::Label { row, target: t, classes });
        }
        confusion.record(t, argmax(l));
        nll += log_sum_exp(l) - l[t];
    }
    let n = logits.len();
    let per_class_accuracy = (0..classes)
        .map(|c| {
            let total: u64 = confusion.row(c).iter().sum();
            (total > 0).then(|| confusion.get(c, c) as f64 / total as f64)
        })
        .collect();
    Ok(TaskReport {
        accuracy: confusion.trace() as f64 / n as f64,
        nll: nll / n as f64,
        confusion,
        per_class_accuracy,
        count: n,
    })
}

/// Augmentation-free evaluation. Emotion metrics use ground-truth records
/// only unless `include_pseudo` is set.
pub fn evaluate(params: &Params, samples: &[Sample], include_pseudo: bool) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }
    let config = params.config();
    let outputs = samples
        .par_iter()
        .map(|s| {
            forward(
                params,
                ModelInput { driver: s.driver.as_ref(), face: &s.face },
                false,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let distraction = if config.tasks().contains(&Task::Distraction) {
        let logits: Vec<Vec<f64>> = outputs.iter().map(|o| o.distraction_logits.clone().expect("head")).collect();
        let targets = samples
            .iter()
            .map(|s| {
                s.targets
                    .distraction
                    .ok_or_else(|| Error::Data(format!("sample {} lacks a distraction label", s.sample_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        Some(report_from_logits(&logits, &targets, config.num_distraction_classes)?)
    } else {
        None
    };

    let (emo_logits, emo_targets): (Vec<Vec<f64>>, Vec<usize>) = samples
        .iter()
        .zip(&outputs)
        .filter(|(s, _)| include_pseudo || s.provenance == Provenance::GroundTruth)
        .map(|(s, o)| (o.emotion_logits.clone(), s.targets.emotion))
        .unzip();
    let emotion = if emo_logits.is_empty() {
        None
    } else {
        Some(report_from_logits(&emo_logits, &emo_targets, config.num_emotion_classes)?)
    };
    Ok(EvalReport { distraction, emotion })
}
