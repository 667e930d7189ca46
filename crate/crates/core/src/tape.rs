//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends its output tensor to the tape together with the
//! ids of its inputs and whatever intermediates its gradient rule needs. Ids
//! are handed out in construction order, so the tape is topologically sorted
//! by construction and `backward` simply walks it in reverse.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Add { a: Var, b: Var },
    AddBias { x: Var, bias: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: f64 },
    Sum { x: Var },
    Reshape { x: Var },
    Transpose { x: Var, rows: usize, cols: usize },
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Softmax { x: Var, axis: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Gelu { x: Var },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. } | Op::Add { a, b } | Op::Mul { a, b } => vec![*a, *b],
            Op::AddBias { x, bias } => vec![*x, *bias],
            Op::Scale { x, .. }
            | Op::Sum { x }
            | Op::Reshape { x }
            | Op::Transpose { x, .. }
            | Op::Slice { x, .. }
            | Op::Softmax { x, .. }
            | Op::Gelu { x } => vec![*x],
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

/// One recorded step of the computation.
#[derive(Clone, Debug)]
struct Node {
    op: Op,
    needs_grad: bool,
}

/// Computation tape: owns every tensor produced during a forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<Tensor>,
    nodes: Vec<Node>,
}

fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn add_into(acc: &mut Option<Vec<f64>>, contribution: Vec<f64>) {
    match acc {
        Some(g) => g.iter_mut().zip(&contribution).for_each(|(a, c)| *a += c),
        None => *acc = Some(contribution),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Records an input tensor. Its `requires_grad` flag decides whether
    /// `backward` fills its gradient.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let needs_grad = tensor.requires_grad;
        self.push(tensor, Op::Leaf, needs_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    /// Accumulated gradient of a leaf, if `backward` reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.values[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.values.iter_mut().for_each(Tensor::zero_grad);
    }

    fn push(&mut self, tensor: Tensor, op: Op, needs_grad: bool) -> Var {
        self.values.push(tensor);
        self.nodes.push(Node { op, needs_grad });
        Var(self.values.len() - 1)
    }

    fn record(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op) -> Result<Var> {
        let needs_grad = op.inputs().iter().any(|v| self.nodes[v.0].needs_grad);
        let tensor = Tensor::new(shape, data)?;
        Ok(self.push(tensor, op, needs_grad))
    }

    fn check(&self, vars: &[Var]) -> Result<()> {
        match vars.iter().find(|v| v.0 >= self.values.len()) {
            Some(v) => Err(Error::Contract(format!("tensor id {} is not on this tape", v.0))),
            None => Ok(()),
        }
    }

    /// Matrix product of `a[m×k]` and `b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!("matmul of {sa:?} and {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul_kernel(self.value(a).data(), self.value(b).data(), m, k, n);
        self.record(vec![m, n], data, Op::MatMul { a, b, m, k, n })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "add of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        self.record(self.shape(a).to_vec(), data, Op::Add { a, b })
    }

    /// Adds `bias[n]` to every length-`n` row of `x[..., n]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.check(&[x, bias])?;
        let n = *self.shape(x).last().unwrap();
        if self.shape(bias) != [n] {
            return Err(Error::dim(format!(
                "bias {:?} does not match rows of {:?}",
                self.shape(bias),
                self.shape(x)
            )));
        }
        let b = self.value(bias).data();
        let data = self.value(x).data().chunks(n).flat_map(|row| row.iter().zip(b).map(|(v, c)| v + c)).collect();
        self.record(self.shape(x).to_vec(), data, Op::AddBias { x, bias })
    }

    /// Affine map `x·W + b` for `x[m×k]`, `W[k×n]`, `b[n]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let y = self.matmul(x, weight)?;
        self.add_bias(y, bias)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "mul of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        self.record(self.shape(a).to_vec(), data, Op::Mul { a, b })
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.check(&[x])?;
        let data = self.value(x).data().iter().map(|v| v * factor).collect();
        self.record(self.shape(x).to_vec(), data, Op::Scale { x, factor })
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let total = self.value(x).data().iter().sum();
        self.record(vec![1], vec![total], Op::Sum { x })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.check(&[x])?;
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() {
            return Err(Error::dim(format!("cannot reshape {:?} into {shape:?}", self.shape(x))));
        }
        let data = self.value(x).data().to_vec();
        self.record(shape.to_vec(), data, Op::Reshape { x })
    }

    /// Transpose of a 2-D tensor.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::dim(format!("transpose expects rank 2, got {s:?}")));
        }
        let (rows, cols) = (s[0], s[1]);
        let src = self.value(x).data();
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                data[c * rows + r] = src[r * cols + c];
            }
        }
        self.record(vec![cols, rows], data, Op::Transpose { x, rows, cols })
    }

    /// Concatenation along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        self.check(inputs)?;
        let first = inputs
            .first()
            .ok_or_else(|| Error::dim("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim(format!("concat axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::dim(format!("concat of {base:?} and {s:?} along axis {axis}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = Tensor::axis_extents(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let len = self.shape(v)[axis] * inner;
                data.extend_from_slice(&self.value(v).data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        self.record(shape, data, Op::Concat { inputs: inputs.to_vec(), axis })
    }

    /// Contiguous range `[start, start+len)` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.check(&[x])?;
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::dim(format!(
                "slice [{start}, {}) along axis {axis} of {shape:?}",
                start + len
            )));
        }
        let (outer, n, inner) = Tensor::axis_extents(&shape, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        self.record(out_shape, data, Op::Slice { x, axis, start })
    }

    /// Numerically stable softmax along `axis` (max-subtracted).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check(&[x])?;
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::dim(format!("softmax axis {axis} out of range for {shape:?}")));
        }
        let data = softmax_along(self.value(x).data(), &shape, axis);
        self.record(shape, data, Op::Softmax { x, axis })
    }

    /// Layer normalization over the last dimension, then `γ·x̂ + β`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        self.check(&[x, gamma, beta])?;
        let shape = self.shape(x).to_vec();
        let d = *shape.last().unwrap();
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::dim(format!(
                "layer_norm of {shape:?} with gamma {:?} and beta {:?}",
                self.shape(gamma),
                self.shape(beta)
            )));
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let src = self.value(x).data();
        let rows = src.len() / d;
        let mut xhat = Vec::with_capacity(src.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(src.len());
        for row in src.chunks(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std.push(istd);
            for (j, v) in row.iter().enumerate() {
                let h = (v - mean) * istd;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        self.record(shape, out, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    /// GELU with the exact Gaussian CDF: `x·Φ(x)`.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let data = self.value(x).data().iter().map(|&v| v * std_normal_cdf(v)).collect();
        self.record(self.shape(x).to_vec(), data, Op::Gelu { x })
    }

    /// Mean over rows of `-log softmax(logits)[target]` for `logits[B×K]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        self.check(&[logits])?;
        let shape = self.shape(logits);
        if shape.len() != 2 || shape[0] != targets.len() {
            return Err(Error::dim(format!(
                "cross_entropy of {shape:?} with {} targets",
                targets.len()
            )));
        }
        let classes = shape[1];
        if let Some((row, &target)) = targets.iter().enumerate().find(|(_, &t)| t >= classes) {
            return Err(Error::Label { row, target, classes });
        }
        let probs = softmax_along(self.value(logits).data(), shape, 1);
        let src = self.value(logits).data();
        let mut total = 0.0;
        for (row, &t) in src.chunks(classes).zip(targets) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
        }
        let loss = total / targets.len() as f64;
        self.record(vec![1], vec![loss], Op::CrossEntropy { logits, targets: targets.to_vec(), probs })
    }

    /// Propagates gradients from a scalar `loss` to every reachable leaf with
    /// `requires_grad`. Leaf gradients accumulate across calls.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check(&[loss])?;
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let Some(gout) = grads[id].take() else { continue };
            if let Op::Leaf = self.nodes[id].op {
                add_into(&mut self.values[id].grad, gout);
                continue;
            }
            for (input, contribution) in self.input_grads(id, &gout) {
                if self.nodes[input.0].needs_grad {
                    add_into(&mut grads[input.0], contribution);
                }
            }
        }
        Ok(())
    }

    /// Gradient contributions of node `id` to each of its inputs.
    fn input_grads(&self, id: usize, gout: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let wants = |v: &Var| self.nodes[v.0].needs_grad;
        match &self.nodes[id].op {
            Op::Leaf => vec![],
            &Op::MatMul { a, b, m, k, n } => {
                let mut out = Vec::with_capacity(2);
                if wants(&a) {
                    // dA = dC · Bᵀ
                    let bd = self.value(b).data();
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let grow = &gout[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bd[p * n..(p + 1) * n];
                            da[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    out.push((a, da));
                }
                if wants(&b) {
                    // dB = Aᵀ · dC
                    let ad = self.value(a).data();
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let grow = &gout[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = ad[i * k + p];
                            for (d, g) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += aip * g;
                            }
                        }
                    }
                    out.push((b, db));
                }
                out
            }
            &Op::Add { a, b } => vec![(a, gout.to_vec()), (b, gout.to_vec())],
            &Op::AddBias { x, bias } => {
                let n = self.shape(bias)[0];
                let mut db = vec![0.0; n];
                for row in gout.chunks(n) {
                    db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                }
                vec![(x, gout.to_vec()), (bias, db)]
            }
            &Op::Mul { a, b } => {
                let (ad, bd) = (self.value(a).data(), self.value(b).data());
                vec![
                    (a, gout.iter().zip(bd).map(|(g, y)| g * y).collect()),
                    (b, gout.iter().zip(ad).map(|(g, x)| g * x).collect()),
                ]
            }
            &Op::Scale { x, factor } => vec![(x, gout.iter().map(|g| g * factor).collect())],
            &Op::Sum { x } => vec![(x, vec![gout[0]; self.value(x).numel()])],
            &Op::Reshape { x } => vec![(x, gout.to_vec())],
            &Op::Transpose { x, rows, cols } => {
                let mut dx = vec![0.0; rows * cols];
                for r in 0..rows {
                    for c in 0..cols {
                        dx[r * cols + c] = gout[c * rows + r];
                    }
                }
                vec![(x, dx)]
            }
            Op::Concat { inputs, axis } => {
                let out_shape = self.value(Var(id)).shape();
                let (outer, total, inner) = Tensor::axis_extents(out_shape, *axis);
                let mut offset = 0;
                let mut out = Vec::with_capacity(inputs.len());
                for &v in inputs {
                    let len = self.shape(v)[*axis];
                    let mut dv = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let base = o * total * inner + offset * inner;
                        dv.extend_from_slice(&gout[base..base + len * inner]);
                    }
                    offset += len;
                    out.push((v, dv));
                }
                out
            }
            &Op::Slice { x, axis, start } => {
                let in_shape = self.shape(x);
                let (outer, n, inner) = Tensor::axis_extents(in_shape, axis);
                let len = self.value(Var(id)).shape()[axis];
                let mut dx = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    let base = o * n * inner + start * inner;
                    dx[base..base + len * inner].copy_from_slice(&gout[o * len * inner..(o + 1) * len * inner]);
                }
                vec![(x, dx)]
            }
            &Op::Softmax { x, axis } => {
                let y = self.value(Var(id));
                let (outer, n, inner) = Tensor::axis_extents(y.shape(), axis);
                let yd = y.data();
                let mut dx = vec![0.0; yd.len()];
                for o in 0..outer {
                    for r in 0..inner {
                        let idx = |j: usize| o * n * inner + j * inner + r;
                        let dot: f64 = (0..n).map(|j| gout[idx(j)] * yd[idx(j)]).sum();
                        for j in 0..n {
                            dx[idx(j)] = yd[idx(j)] * (gout[idx(j)] - dot);
                        }
                    }
                }
                vec![(x, dx)]
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let g = self.value(*gamma).data();
                let d = g.len();
                let mut dx = vec![0.0; xhat.len()];
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                for (r, istd) in inv_std.iter().enumerate() {
                    let rows = r * d..(r + 1) * d;
                    let (gy, xh) = (&gout[rows.clone()], &xhat[rows.clone()]);
                    let dxhat: Vec<f64> = gy.iter().zip(g).map(|(a, b)| a * b).collect();
                    let sum_dxhat: f64 = dxhat.iter().sum();
                    let sum_dxhat_xhat: f64 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum();
                    for j in 0..d {
                        dx[r * d + j] =
                            istd / d as f64 * (d as f64 * dxhat[j] - sum_dxhat - xh[j] * sum_dxhat_xhat);
                        dgamma[j] += gy[j] * xh[j];
                        dbeta[j] += gy[j];
                    }
                }
                vec![(*x, dx), (*gamma, dgamma), (*beta, dbeta)]
            }
            &Op::Gelu { x } => {
                let dx = self
                    .value(x)
                    .data()
                    .iter()
                    .zip(gout)
                    .map(|(&v, g)| g * (std_normal_cdf(v) + v * std_normal_pdf(v)))
                    .collect();
                vec![(x, dx)]
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let classes = self.shape(*logits)[1];
                let scale = gout[0] / targets.len() as f64;
                let mut dl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (row, &t) in targets.iter().enumerate() {
                    dl[row * classes + t] -= scale;
                }
                vec![(*logits, dl)]
            }
        }
    }
}

/// Softmax of `data` (with `shape`) along `axis`, max-subtracted.
pub(crate) fn softmax_along(data: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let (outer, n, inner) = Tensor::axis_extents(shape, axis);
    let mut out = vec![0.0; data.len()];
    for o in 0..outer {
        for r in 0..inner {
            let idx = |j: usize| o * n * inner + j * inner + r;
            let max = (0..n).map(|j| data[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for j in 0..n {
                let e = (data[idx(j)] - max).exp();
                out[idx(j)] = e;
                denom += e;
            }
            for j in 0..n {
                out[idx(j)] /= denom;
            }
        }
    }
    out
}
