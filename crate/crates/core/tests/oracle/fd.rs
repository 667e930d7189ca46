//! Central finite-difference gradient checking against the tape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vitdd::{Result, Tape, Tensor, Var};

pub const H: f64 = 1e-5;

/// `‖a - n‖ / max(‖a‖, ‖n‖, 1e-6)` in the Euclidean norm.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    diff / norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied())).max(1e-6)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Reduces `v` to a scalar with fixed pseudo-random weights so every output
/// coordinate contributes a distinct sensitivity.
pub fn project(tape: &mut Tape, v: Var) -> Result<Var> {
    let shape = tape.shape(v).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ shape.iter().product::<usize>() as u64);
    let w = tape.leaf(random_tensor(&mut rng, &shape, 1.0));
    let m = tape.mul(v, w)?;
    tape.sum(m)
}

fn evaluate(inputs: &[Tensor], f: &impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars).unwrap();
    tape.value(out).item()
}

/// Maximum over inputs of the relative error between the tape gradient and
/// the central-difference gradient of that input.
pub fn check(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone().with_grad())).collect();
    let out = f(&mut tape, &vars).unwrap();
    tape.backward(out).unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; tape.value(v).numel()]))
        .collect();
    let mut worst = 0.0f64;
    for (i, grads) in analytic.iter().enumerate() {
        let mut numeric = Vec::with_capacity(grads.len());
        for j in 0..grads.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += H;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= H;
            numeric.push((evaluate(&plus, &f) - evaluate(&minus, &f)) / (2.0 * H));
        }
        worst = worst.max(rel_err(grads, &numeric));
    }
    worst
}

use vitdd::model::{forward_on_tape, model_loss, LossTerms, ModelConfig, ModelInput, ParamVars, Params, Targets, Task};

/// Random parameters, inputs and targets for one loss gradient check.
pub struct LossCase {
    pub params: Params,
    pub driver: Option<Tensor>,
    pub face: Tensor,
    pub targets: Targets,
}

impl LossCase {
    pub fn new(config: &ModelConfig, seed: u64) -> Self {
        let params = Params::random(config, seed, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 1);
        let driver = config
            .driver_resolution
            .map(|r| super::random_image(&mut rng, config.channels, r.height, r.width));
        let f = config.face_resolution;
        let face = super::random_image(&mut rng, config.channels, f.height, f.width);
        let targets = Targets {
            distraction: driver.as_ref().map(|_| rng.gen_range(0..config.num_classes(Task::Distraction))),
            emotion: rng.gen_range(0..config.num_classes(Task::Emotion)),
        };
        LossCase { params, driver, face, targets }
    }

    pub fn loss(&self, params: &Params) -> f64 {
        let mut tape = Tape::new();
        let pv = ParamVars::register(&mut tape, params, |_| false);
        let l = self.loss_on(&mut tape, &pv);
        tape.value(l).item()
    }

    fn loss_on(&self, tape: &mut Tape, pv: &ParamVars) -> Var {
        let config = self.params.config();
        let input = ModelInput { driver: self.driver.as_ref(), face: &self.face };
        let fv = forward_on_tape(tape, pv, config, input).unwrap();
        model_loss(tape, &fv, self.targets, config.loss_weights, LossTerms::AllTasks).unwrap()
    }

    /// Maximum over parameter tensors of the relative error restricted to the
    /// chosen coordinates. `coords(name, len)`
    /// lists the flat indices to probe in each parameter tensor.
    pub fn check(&self, mut coords: impl FnMut(&str, usize) -> Vec<usize>) -> f64 {
        let mut tape = Tape::new();
        let pv = ParamVars::register(&mut tape, &self.params, |_| true);
        let l = self.loss_on(&mut tape, &pv);
        tape.backward(l).unwrap();
        let grads = pv.gradients(&tape);
        let mut worst = 0.0f64;
        let mut probe = self.params.clone();
        for (name, g) in &grads {
            let picked = coords(name, g.len());
            let mut numeric = Vec::with_capacity(picked.len());
            for &j in &picked {
                let orig = probe.tensor(name).data()[j];
                probe.get_mut(name).unwrap().data_mut()[j] = orig + H;
                let plus = self.loss(&probe);
                probe.get_mut(name).unwrap().data_mut()[j] = orig - H;
                let minus = self.loss(&probe);
                probe.get_mut(name).unwrap().data_mut()[j] = orig;
                numeric.push((plus - minus) / (2.0 * H));
            }
            let analytic: Vec<f64> = picked.iter().map(|&j| g[j]).collect();
            worst = worst.max(rel_err(&analytic, &numeric));
        }
        worst
    }
}
