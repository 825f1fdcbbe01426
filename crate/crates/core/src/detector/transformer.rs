//! Positional embedding and the three attention stacks: encoder, query
//! refiner and decoder. All blocks are pre-norm with residual connections.

use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use super::layers::{join, FeedForward, LayerNorm, Linear, MultiHeadAttention, Params};
use super::tensor::add_matrices;
use crate::linalg::Matrix;
use crate::math;
use crate::{Error, Result};

/// Fixed 2-D sinusoidal embedding as an `(h*w) x d` token matrix.
///
/// Channels `0..d/2` encode the row, `d/2..d` the column. Within a block,
/// channel `2i` is `sin(pos * w_i)` and `2i + 1` is `cos(pos * w_i)` with
/// `w_i = 10000^(-2i / (d/2))`.
pub fn positional_embedding(h: usize, w: usize, d: usize) -> Result<Matrix> {
    if !d.is_multiple_of(2) {
        return Err(Error::OddDimension(d));
    }
    let half = d / 2;
    let freq: Vec<f64> = (0..half)
        .map(|j| {
            let i = (j / 2) as f64;
            1.0 / math::powf(10000.0, 2.0 * i / half as f64)
        })
        .collect();
    let mut p = Matrix::zeros(h * w, d);
    for y in 0..h {
        for x in 0..w {
            let row = p.row_mut(y * w + x);
            for (block, pos) in [(0, y as f64), (half, x as f64)] {
                for j in 0..half {
                    let a = pos * freq[j];
                    row[block + j] = if j % 2 == 0 { math::sin(a) } else { math::cos(a) };
                }
            }
        }
    }
    Ok(p)
}

/// Self-attention block whose queries and keys carry the positional
/// embedding.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
}

impl EncoderLayer {
    pub fn new(rng: &mut ChaCha8Rng, d: usize, heads: usize, ffn: usize) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::new(d),
            attn: MultiHeadAttention::new(rng, d, heads)?,
            norm2: LayerNorm::new(d),
            ffn: FeedForward::new(rng, d, ffn),
        })
    }

    pub fn forward(&self, x: Matrix, pos: &Matrix, record: Option<&mut Vec<Matrix>>) -> Result<Matrix> {
        let n = self.norm1.forward(&x);
        let qk = add_matrices(n.clone(), pos);
        let x = add_matrices(x, &self.attn.forward(&qk, &qk, &n, record)?);
        let f = self.ffn.forward(&self.norm2.forward(&x))?;
        Ok(add_matrices(x, &f))
    }
}

/// Self-attention among queries, cross-attention into the methane
/// candidate tokens, then a feed-forward block.
#[derive(Debug, Clone)]
pub struct RefinerLayer {
    pub norm1: LayerNorm,
    pub self_attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub norm3: LayerNorm,
    pub ffn: FeedForward,
}

impl RefinerLayer {
    pub fn new(rng: &mut ChaCha8Rng, d: usize, heads: usize, ffn: usize) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::new(d),
            self_attn: MultiHeadAttention::new(rng, d, heads)?,
            norm2: LayerNorm::new(d),
            cross_attn: MultiHeadAttention::new(rng, d, heads)?,
            norm3: LayerNorm::new(d),
            ffn: FeedForward::new(rng, d, ffn),
        })
    }

    pub fn forward(&self, q: Matrix, memory: &Matrix, mut record: Option<&mut Vec<Matrix>>) -> Result<Matrix> {
        let n = self.norm1.forward(&q);
        let q = add_matrices(q, &self.self_attn.forward(&n, &n, &n, record.as_deref_mut())?);
        let n = self.norm2.forward(&q);
        let q = add_matrices(q, &self.cross_attn.forward(&n, memory, memory, record)?);
        let f = self.ffn.forward(&self.norm3.forward(&q))?;
        Ok(add_matrices(q, &f))
    }
}

/// Cross-attention only: each query row is updated independently of the
/// other queries.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub norm1: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
}

impl DecoderLayer {
    pub fn new(rng: &mut ChaCha8Rng, d: usize, heads: usize, ffn: usize) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::new(d),
            cross_attn: MultiHeadAttention::new(rng, d, heads)?,
            norm2: LayerNorm::new(d),
            ffn: FeedForward::new(rng, d, ffn),
        })
    }

    pub fn forward(
        &self,
        q: Matrix,
        keys: &Matrix,
        values: &Matrix,
        record: Option<&mut Vec<Matrix>>,
    ) -> Result<Matrix> {
        let n = self.norm1.forward(&q);
        let q = add_matrices(q, &self.cross_attn.forward(&n, keys, values, record)?);
        let f = self.ffn.forward(&self.norm2.forward(&q))?;
        Ok(add_matrices(q, &f))
    }
}

fn check_tokens(name: &str, m: &Matrix, d: usize) -> Result<()> {
    if m.cols != d {
        return Err(Error::DimensionMismatch(format!(
            "{name} has {} channels, model width is {d}",
            m.cols
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub layers: Vec<EncoderLayer>,
}

impl Encoder {
    pub fn forward(&self, f_z: &Matrix, pos: &Matrix, mut record: Option<&mut Vec<Matrix>>) -> Result<Matrix> {
        if (f_z.rows, f_z.cols) != (pos.rows, pos.cols) {
            return Err(Error::BadGeometry(format!(
                "features {}x{} vs positions {}x{}",
                f_z.rows, f_z.cols, pos.rows, pos.cols
            )));
        }
        let mut x = f_z.clone();
        for l in &self.layers {
            x = l.forward(x, pos, record.as_deref_mut())?;
        }
        Ok(x)
    }
}

#[derive(Debug, Clone)]
pub struct QueryRefiner {
    pub layers: Vec<RefinerLayer>,
}

impl QueryRefiner {
    pub fn forward(&self, f_mc: &Matrix, queries: &Matrix, mut record: Option<&mut Vec<Matrix>>) -> Result<Matrix> {
        check_tokens("candidate map", f_mc, queries.cols)?;
        let mut q = queries.clone();
        for l in &self.layers {
            q = l.forward(q, f_mc, record.as_deref_mut())?;
        }
        Ok(q)
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub layers: Vec<DecoderLayer>,
    /// Width bridge from the model dimension to the output embedding.
    pub out: Linear,
}

impl Decoder {
    pub fn forward(
        &self,
        f_e: &Matrix,
        pos: &Matrix,
        q_ref: &Matrix,
        mut record: Option<&mut Vec<Matrix>>,
    ) -> Result<Matrix> {
        check_tokens("encoded map", f_e, q_ref.cols)?;
        check_tokens("positions", pos, q_ref.cols)?;
        let keys = add_matrices(f_e.clone(), pos);
        let mut q = q_ref.clone();
        for l in &self.layers {
            q = l.forward(q, &keys, f_e, record.as_deref_mut())?;
        }
        self.out.forward(&q)
    }
}

macro_rules! visit_layers {
    ($ty:ty, [$($field:ident),*]) => {
        impl Params for $ty {
            fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
                $(self.$field.visit(&join(prefix, stringify!($field)), f);)*
            }
            fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
                $(self.$field.visit_mut(&join(prefix, stringify!($field)), f);)*
            }
        }
    };
}

visit_layers!(EncoderLayer, [norm1, attn, norm2, ffn]);
visit_layers!(RefinerLayer, [norm1, self_attn, norm2, cross_attn, norm3, ffn]);
visit_layers!(DecoderLayer, [norm1, cross_attn, norm2, ffn]);

macro_rules! visit_stack {
    ($ty:ty) => {
        impl Params for $ty {
            fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
                for (i, l) in self.layers.iter().enumerate() {
                    l.visit(&join(prefix, &format!("layer{i}")), f);
                }
            }
            fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
                for (i, l) in self.layers.iter_mut().enumerate() {
                    l.visit_mut(&join(prefix, &format!("layer{i}")), f);
                }
            }
        }
    };
}

visit_stack!(Encoder);
visit_stack!(QueryRefiner);

impl Params for Decoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("layer{i}")), f);
        }
        self.out.visit(&join(prefix, "out"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("layer{i}")), f);
        }
        self.out.visit_mut(&join(prefix, "out"), f);
    }
}
