//! AdamW with decoupled weight decay.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::Params;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl From<&super::TrainConfig> for AdamWConfig {
    fn from(c: &super::TrainConfig) -> Self {
        AdamWConfig {
            beta1: c.beta1,
            beta2: c.beta2,
            eps: c.eps,
            weight_decay: c.weight_decay,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// First/second moments for trainable parameters only, plus the step count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub moments: BTreeMap<String, Moments>,
}

/// One AdamW update over every parameter that has a gradient in `grads`;
/// parameters without one are left untouched and get no state.
///
/// `θ ← θ·(1 − lr·wd) − lr·m̂/(√v̂ + ε)`
pub fn adamw_step(
    params: &mut Params,
    grads: &BTreeMap<String, Vec<f64>>,
    state: &mut OptimizerState,
    lr: f64,
    config: &AdamWConfig,
) -> Result<()> {
    for (name, g) in grads {
        let p = params
            .get(name)
            .ok_or_else(|| Error::Config(format!("gradient for unknown parameter {name}")))?;
        if p.numel() != g.len() {
            return Err(Error::dim(format!("gradient of {name} has {} entries, expected {}", g.len(), p.numel())));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient for parameter {name}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    let decay = 1.0 - lr * config.weight_decay;
    for (name, g) in grads {
        let moments = state.moments.entry(name.clone()).or_insert_with(|| Moments {
            m: vec![0.0; g.len()],
            v: vec![0.0; g.len()],
        });
        let theta = params.get_mut(name).expect("checked above").data_mut();
        for i in 0..g.len() {
            let gi = g[i];
            moments.m[i] = config.beta1 * moments.m[i] + (1.0 - config.beta1) * gi;
            moments.v[i] = config.beta2 * moments.v[i] + (1.0 - config.beta2) * gi * gi;
            let m_hat = moments.m[i] / bc1;
            let v_hat = moments.v[i] / bc2;
            theta[i] = theta[i] * decay - lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}
