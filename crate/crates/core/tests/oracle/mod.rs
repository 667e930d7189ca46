//! Straight-line scalar reference of the model: explicit loops, one head at
//! a time, parameter names spelled out. Shares no code with the tape.

#![allow(dead_code)]

use vitdd::model::Params;
use vitdd::Tensor;

pub type Mat = Vec<Vec<f64>>;

pub fn mat(t: &Tensor) -> Mat {
    let s = t.shape();
    let cols = *s.last().unwrap();
    t.data().chunks(cols).map(<[f64]>::to_vec).collect()
}

pub fn vector(t: &Tensor) -> Vec<f64> {
    t.data().to_vec()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn layer_norm(row: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    row.iter()
        .zip(gamma.iter().zip(beta))
        .map(|(v, (g, b))| (v - mean) * inv * g + b)
        .collect()
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn affine(x: &Mat, w: &Mat, b: &[f64]) -> Mat {
    matmul(x, w)
        .into_iter()
        .map(|r| r.iter().zip(b).map(|(v, bb)| v + bb).collect())
        .collect()
}

/// Patch rows of a `C×H×W` image: pixel `(c, y, x)` of patch `(pr, pc)` sits
/// at column `c·P² + y·P + x`.
pub fn patches(image: &Tensor, p: usize) -> Mat {
    let s = image.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let mut out = Vec::new();
    for pr in 0..h / p {
        for pc in 0..w / p {
            let mut row = vec![0.0; c * p * p];
            for ch in 0..c {
                for y in 0..p {
                    for x in 0..p {
                        row[ch * p * p + y * p + x] = image.get(&[ch, pr * p + y, pc * p + x]);
                    }
                }
            }
            out.push(row);
        }
    }
    out
}

pub struct OracleOutput {
    pub distraction: Option<Vec<f64>>,
    pub emotion: Vec<f64>,
    /// `[layer][head][query][key]`.
    pub attention: Vec<Vec<Mat>>,
}

/// Multi-head self-attention, per head: `softmax(q·kᵀ/√dh)·v`, then concat and project.
pub fn msa(z: &Mat, qkv: &Mat, proj: &Mat, heads: usize) -> (Mat, Vec<Mat>) {
    let d = z[0].len();
    let dh = d / heads;
    let t = z.len();
    let mut concat = vec![vec![0.0; d]; t];
    let mut maps = Vec::new();
    for h in 0..heads {
        let col = |i: usize, base: usize, j: usize| -> f64 { (0..d).map(|c| z[i][c] * qkv[c][base + h * dh + j]).sum() };
        let q: Mat = (0..t).map(|i| (0..dh).map(|j| col(i, 0, j)).collect()).collect();
        let k: Mat = (0..t).map(|i| (0..dh).map(|j| col(i, d, j)).collect()).collect();
        let v: Mat = (0..t).map(|i| (0..dh).map(|j| col(i, 2 * d, j)).collect()).collect();
        let mut a = Vec::with_capacity(t);
        for i in 0..t {
            let scores: Vec<f64> = (0..t)
                .map(|j| (0..dh).map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            a.push(softmax(&scores));
        }
        for i in 0..t {
            for c in 0..dh {
                concat[i][h * dh + c] = (0..t).map(|j| a[i][j] * v[j][c]).sum();
            }
        }
        maps.push(a);
    }
    (matmul(&concat, proj), maps)
}

pub fn forward(params: &Params, driver: Option<&Tensor>, face: &Tensor) -> OracleOutput {
    let c = params.config();
    let p = |name: &str| params.get(name).unwrap_or_else(|| panic!("no {name}"));
    let has_dist = c.num_distraction_classes > 0;

    let mut z: Mat = Vec::new();
    if has_dist {
        z.push(vector(p("class_tokens.distraction")));
    }
    z.push(vector(p("class_tokens.emotion")));
    let mut inputs = Vec::new();
    if let Some(d) = driver {
        inputs.push(("driver", d));
    }
    inputs.push(("face", face));
    for (m, img) in inputs {
        let x = affine(
            &patches(img, c.patch_size),
            &mat(p(&format!("patch_embed.{m}.weight"))),
            &vector(p(&format!("patch_embed.{m}.bias"))),
        );
        let pos = mat(p(&format!("pos_embed.{m}")));
        for (row, prow) in x.iter().zip(&pos) {
            z.push(row.iter().zip(prow).map(|(a, b)| a + b).collect());
        }
    }

    let mut attention = Vec::new();
    for l in 0..c.depth {
        let b = |s: &str| format!("blocks.{l}.{s}");
        let ln1: Mat = z
            .iter()
            .map(|r| layer_norm(r, &vector(p(&b("norm1.gamma"))), &vector(p(&b("norm1.beta"))), c.ln_eps))
            .collect();
        let (a, maps) = msa(&ln1, &mat(p(&b("msa.qkv"))), &mat(p(&b("msa.proj"))), c.num_heads);
        attention.push(maps);
        let mid: Mat = a.iter().zip(&z).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect()).collect();
        let ln2: Mat = mid
            .iter()
            .map(|r| layer_norm(r, &vector(p(&b("norm2.gamma"))), &vector(p(&b("norm2.beta"))), c.ln_eps))
            .collect();
        let hidden: Mat = affine(&ln2, &mat(p(&b("mlp.fc1.weight"))), &vector(p(&b("mlp.fc1.bias"))))
            .into_iter()
            .map(|r| r.into_iter().map(gelu).collect())
            .collect();
        let out = affine(&hidden, &mat(p(&b("mlp.fc2.weight"))), &vector(p(&b("mlp.fc2.bias"))));
        z = out.iter().zip(&mid).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect()).collect();
    }

    let (g, beta) = (vector(p("final_norm.gamma")), vector(p("final_norm.beta")));
    let head = |row: &[f64], task: &str| -> Vec<f64> {
        let y = layer_norm(row, &g, &beta, c.ln_eps);
        affine(&vec![y], &mat(p(&format!("heads.{task}.weight"))), &vector(p(&format!("heads.{task}.bias"))))
            .remove(0)
    };
    let (distraction, emotion) = if has_dist {
        (Some(head(&z[0], "distraction")), head(&z[1], "emotion"))
    } else {
        (None, head(&z[0], "emotion"))
    };
    OracleOutput { distraction, emotion, attention }
}

/// Random normalized-space image.
pub fn random_image(rng: &mut impl rand::Rng, c: usize, h: usize, w: usize) -> Tensor {
    Tensor::new(vec![c, h, w], (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}
pub mod fd;
