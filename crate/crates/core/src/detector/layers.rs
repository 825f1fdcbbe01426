//! Building blocks with seeded uniform initialization.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::linalg::Matrix;
use crate::math;
use crate::{Error, Result};

/// Visitor over named parameter buffers, used for serialization and for
/// test-time edits such as zeroing biases.
pub trait Params {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64]));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64]));
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        String::from(name)
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

/// Dense map `y = x W^T + b` applied to each row of a token matrix.
#[derive(Debug, Clone)]
pub struct Linear {
    /// `out x in`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Self {
        let bound = 1.0 / math::sqrt(fan_in.max(1) as f64);
        Self {
            weight: Matrix::from_vec(fan_out, fan_in, uniform(rng, fan_in * fan_out, bound)),
            bias: uniform(rng, fan_out, bound),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.cols
    }

    pub fn fan_out(&self) -> usize {
        self.weight.rows
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols != self.fan_in() {
            return Err(Error::DimensionMismatch(format!(
                "linear expects {} features, got {}",
                self.fan_in(),
                x.cols
            )));
        }
        let mut out = Matrix::zeros(x.rows, self.fan_out());
        for r in 0..x.rows {
            let xr = x.row(r);
            let or = out.row_mut(r);
            for (o, dst) in or.iter_mut().enumerate() {
                let w = self.weight.row(o);
                let mut s = self.bias[o];
                for (a, b) in xr.iter().zip(w) {
                    s += a * b;
                }
                *dst = s;
            }
        }
        Ok(out)
    }

    /// Pointwise (1x1) convolution over a feature map.
    pub fn forward_map(&self, x: &Tensor) -> Result<Tensor> {
        let out = self.forward(&x.tokens())?;
        Ok(Tensor::from_tokens(x.h, x.w, out))
    }
}

impl Params for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "weight"), &self.weight.data);
        f(&join(prefix, "bias"), &self.bias);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "weight"), &mut self.weight.data);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// Square convolution with zero padding `k / 2`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub k: usize,
    pub stride: usize,
    pub cin: usize,
    pub cout: usize,
    /// Laid out `[ky][kx][cin][cout]`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn new(rng: &mut ChaCha8Rng, k: usize, stride: usize, cin: usize, cout: usize) -> Self {
        let fan_in = k * k * cin;
        let bound = 1.0 / math::sqrt(fan_in.max(1) as f64);
        Self {
            k,
            stride,
            cin,
            cout,
            weight: uniform(rng, fan_in * cout, bound),
            bias: uniform(rng, cout, bound),
        }
    }

    pub fn out_size(&self, n: usize) -> usize {
        (n + 2 * (self.k / 2) - self.k) / self.stride + 1
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.c != self.cin {
            return Err(Error::DimensionMismatch(format!(
                "convolution expects {} channels, got {}",
                self.cin, x.c
            )));
        }
        let pad = (self.k / 2) as isize;
        let (oh, ow) = (self.out_size(x.h), self.out_size(x.w));
        let mut out = Tensor::zeros(oh, ow, self.cout);
        let mut acc = vec![0.0; self.cout];
        for oy in 0..oh {
            for ox in 0..ow {
                acc.copy_from_slice(&self.bias);
                for ky in 0..self.k {
                    let iy = (oy * self.stride) as isize + ky as isize - pad;
                    if iy < 0 || iy >= x.h as isize {
                        continue;
                    }
                    for kx in 0..self.k {
                        let ix = (ox * self.stride) as isize + kx as isize - pad;
                        if ix < 0 || ix >= x.w as isize {
                            continue;
                        }
                        let px = x.pixel(iy as usize, ix as usize);
                        let base = (ky * self.k + kx) * self.cin * self.cout;
                        for (ci, &v) in px.iter().enumerate() {
                            if v == 0.0 {
                                continue;
                            }
                            let w = &self.weight[base + ci * self.cout..base + (ci + 1) * self.cout];
                            for (a, wv) in acc.iter_mut().zip(w) {
                                *a += v * wv;
                            }
                        }
                    }
                }
                out.pixel_mut(oy, ox).copy_from_slice(&acc);
            }
        }
        Ok(out)
    }
}

impl Params for Conv2d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        let n = x.cols as f64;
        for r in 0..x.rows {
            let row = out.row_mut(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / math::sqrt(var + self.eps);
            for ((v, g), b) in row.iter_mut().zip(&self.gamma).zip(&self.beta) {
                *v = (*v - mean) * inv * g + b;
            }
        }
        out
    }
}

impl Params for LayerNorm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "bias"), &self.beta);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "bias"), &mut self.beta);
    }
}

/// Row-wise softmax in place.
pub fn softmax_rows(m: &mut Matrix) {
    for r in 0..m.rows {
        let row = m.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = math::exp(*v - max);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Scaled dot-product weights per head for already projected queries and
/// keys, each `queries x keys` with rows summing to one.
pub fn head_weights(q: &Matrix, k: &Matrix, heads: usize) -> Vec<Matrix> {
    let dh = q.cols / heads;
    let scale = 1.0 / math::sqrt(dh as f64);
    (0..heads)
        .map(|h| {
            let cols = h * dh..(h + 1) * dh;
            let mut s = Matrix::zeros(q.rows, k.rows);
            for i in 0..q.rows {
                let qi = &q.row(i)[cols.clone()];
                for j in 0..k.rows {
                    let kj = &k.row(j)[cols.clone()];
                    let dot: f64 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                    s.set(i, j, dot * scale);
                }
            }
            softmax_rows(&mut s);
            s
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
}

impl MultiHeadAttention {
    pub fn new(rng: &mut ChaCha8Rng, d: usize, heads: usize) -> Result<Self> {
        Self::with_query_dim(rng, d, d, heads)
    }

    /// Attention whose queries arrive with `dq` features.
    pub fn with_query_dim(rng: &mut ChaCha8Rng, dq: usize, d: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::DimensionMismatch(format!(
                "model width {d} not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            heads,
            wq: Linear::new(rng, dq, d),
            wk: Linear::new(rng, d, d),
            wv: Linear::new(rng, d, d),
            wo: Linear::new(rng, d, d),
        })
    }

    pub fn dim(&self) -> usize {
        self.wk.fan_out()
    }

    /// Per-head attention weights, each `queries x keys` with rows summing
    /// to one.
    pub fn weights(&self, queries: &Matrix, keys: &Matrix) -> Result<Vec<Matrix>> {
        let q = self.wq.forward(queries)?;
        let k = self.wk.forward(keys)?;
        Ok(self.head_weights(&q, &k))
    }

    fn head_weights(&self, q: &Matrix, k: &Matrix) -> Vec<Matrix> {
        head_weights(q, k, self.heads)
    }

    /// Attention output; when `record` is given the per-head weights are
    /// appended to it.
    pub fn forward(
        &self,
        queries: &Matrix,
        keys: &Matrix,
        values: &Matrix,
        record: Option<&mut Vec<Matrix>>,
    ) -> Result<Matrix> {
        if keys.rows != values.rows {
            return Err(Error::DimensionMismatch(format!(
                "{} keys but {} values",
                keys.rows, values.rows
            )));
        }
        let q = self.wq.forward(queries)?;
        let k = self.wk.forward(keys)?;
        let v = self.wv.forward(values)?;
        let dh = self.dim() / self.heads;
        let weights = self.head_weights(&q, &k);
        let mut concat = Matrix::zeros(q.rows, self.dim());
        for (h, a) in weights.iter().enumerate() {
            for i in 0..q.rows {
                let dst = &mut concat.row_mut(i)[h * dh..(h + 1) * dh];
                for j in 0..v.rows {
                    let w = a.get(i, j);
                    for (d, s) in dst.iter_mut().zip(&v.row(j)[h * dh..(h + 1) * dh]) {
                        *d += w * s;
                    }
                }
            }
        }
        if let Some(rec) = record {
            rec.extend(weights);
        }
        self.wo.forward(&concat)
    }
}

impl Params for MultiHeadAttention {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        self.wq.visit(&join(prefix, "q"), f);
        self.wk.visit(&join(prefix, "k"), f);
        self.wv.visit(&join(prefix, "v"), f);
        self.wo.visit(&join(prefix, "out"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.wq.visit_mut(&join(prefix, "q"), f);
        self.wk.visit_mut(&join(prefix, "k"), f);
        self.wv.visit_mut(&join(prefix, "v"), f);
        self.wo.visit_mut(&join(prefix, "out"), f);
    }
}

/// Two-layer perceptron with a ReLU between.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(rng: &mut ChaCha8Rng, d: usize, hidden: usize) -> Self {
        Self {
            up: Linear::new(rng, d, hidden),
            down: Linear::new(rng, hidden, d),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = self.up.forward(x)?;
        h.data.iter_mut().for_each(|v| *v = v.max(0.0));
        self.down.forward(&h)
    }
}

impl Params for FeedForward {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        self.up.visit(&join(prefix, "up"), f);
        self.down.visit(&join(prefix, "down"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.up.visit_mut(&join(prefix, "up"), f);
        self.down.visit_mut(&join(prefix, "down"), f);
    }
}
