//! Box, class and mask heads.

use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use super::backbone::stage_widths;
use super::layers::{head_weights, join, Conv2d, Linear, Params};
use super::tensor::{add_matrices, Tensor};
use crate::linalg::Matrix;
use crate::math;
use crate::{Error, Result};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + math::exp(-x))
}

/// Three-layer perceptron producing `(cx, cy, w, h)` in the unit square.
#[derive(Debug, Clone)]
pub struct BoxHead {
    pub layers: [Linear; 3],
}

impl BoxHead {
    pub fn new(rng: &mut ChaCha8Rng, embed: usize, hidden: usize) -> Self {
        Self {
            layers: [
                Linear::new(rng, embed, hidden),
                Linear::new(rng, hidden, hidden),
                Linear::new(rng, hidden, 4),
            ],
        }
    }

    pub fn forward(&self, e: &Matrix) -> Result<Vec<[f64; 4]>> {
        let mut h = e.clone();
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(&h)?;
            if i < 2 {
                h.data.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok((0..h.rows)
            .map(|r| {
                let row = h.row(r);
                [sigmoid(row[0]), sigmoid(row[1]), sigmoid(row[2]), sigmoid(row[3])]
            })
            .collect())
    }
}

impl Params for BoxHead {
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

/// Attention maps of each query over the encoded tokens, refined through
/// three upsampling stages that each fuse one backbone level.
#[derive(Debug, Clone)]
pub struct MaskHead {
    pub heads: usize,
    pub query: Linear,
    pub key: Linear,
    pub feature: Linear,
    pub fuse: Conv2d,
    /// Lateral 1x1 maps for backbone strides 16, 8 and 4.
    pub adapters: [Linear; 3],
    pub refine: [Conv2d; 3],
    pub out: Linear,
}

/// Backbone stage indices fused by the mask head, coarse to fine.
pub const PYRAMID_STAGES: [usize; 3] = [3, 2, 1];

impl MaskHead {
    pub fn new(
        rng: &mut ChaCha8Rng,
        embed: usize,
        d: usize,
        heads: usize,
        mask_dim: usize,
        backbone_channels: usize,
    ) -> Self {
        let widths = stage_widths(backbone_channels);
        let mut adapter = |s: usize| Linear::new(rng, widths[s], mask_dim);
        let adapters = [adapter(PYRAMID_STAGES[0]), adapter(PYRAMID_STAGES[1]), adapter(PYRAMID_STAGES[2])];
        Self {
            heads,
            query: Linear::new(rng, embed, d),
            key: Linear::new(rng, d, d),
            feature: Linear::new(rng, d, mask_dim),
            fuse: Conv2d::new(rng, 3, 1, mask_dim + heads, mask_dim),
            adapters,
            refine: [
                Conv2d::new(rng, 3, 1, mask_dim, mask_dim),
                Conv2d::new(rng, 3, 1, mask_dim, mask_dim),
                Conv2d::new(rng, 3, 1, mask_dim, mask_dim),
            ],
            out: Linear::new(rng, mask_dim, 1),
        }
    }

    /// Per-head attention of each output embedding over the encoded tokens
    /// (keys carry the positional embedding).
    pub fn attention(&self, e_out: &Matrix, f_e: &Matrix, pos: &Matrix) -> Result<Vec<Matrix>> {
        let q = self.query.forward(e_out)?;
        let k = self.key.forward(&add_matrices(f_e.clone(), pos))?;
        Ok(head_weights(&q, &k, self.heads))
    }

    /// One sigmoid heatmap per query at stride 4 of the input tile, plus the
    /// attention weights used to seed them.
    pub fn forward(
        &self,
        e_out: &Matrix,
        f_e: &Tensor,
        pos: &Matrix,
        stages: &[Tensor],
    ) -> Result<(Vec<Tensor>, Vec<Matrix>)> {
        if stages.len() <= PYRAMID_STAGES[0] {
            return Err(Error::BadGeometry(format!("{} backbone stages, need 4", stages.len())));
        }
        for (i, &s) in PYRAMID_STAGES.iter().enumerate() {
            let want = (f_e.h << (i + 1), f_e.w << (i + 1));
            if (stages[s].h, stages[s].w) != want {
                return Err(Error::BadGeometry(format!(
                    "pyramid level {i} is {}x{}, expected {}x{}",
                    stages[s].h, stages[s].w, want.0, want.1
                )));
            }
        }
        let (h, w) = (f_e.h, f_e.w);
        let attn = self.attention(e_out, &f_e.tokens(), pos)?;
        let base = self.feature.forward_map(f_e)?;
        let lateral: Vec<Tensor> = PYRAMID_STAGES
            .iter()
            .zip(&self.adapters)
            .map(|(&s, a)| a.forward_map(&stages[s]))
            .collect::<Result<_>>()?;

        let mut heatmaps = Vec::with_capacity(e_out.rows);
        for q in 0..e_out.rows {
            let mut maps = Tensor::zeros(h, w, self.heads);
            for (hd, a) in attn.iter().enumerate() {
                for (t, v) in a.row(q).iter().enumerate() {
                    maps.data[t * self.heads + hd] = *v;
                }
            }
            let mut x = self.fuse.forward(&base.concat(&maps))?.relu();
            for (conv, lat) in self.refine.iter().zip(&lateral) {
                x = conv.forward(&x.upsample(2).add(lat))?.relu();
            }
            let mut logit = self.out.forward_map(&x)?;
            logit.data.iter_mut().for_each(|v| *v = sigmoid(*v));
            heatmaps.push(logit);
        }
        Ok((heatmaps, attn))
    }
}

impl Params for MaskHead {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        self.query.visit(&join(prefix, "query"), f);
        self.key.visit(&join(prefix, "key"), f);
        self.feature.visit(&join(prefix, "feature"), f);
        self.fuse.visit(&join(prefix, "fuse"), f);
        for (i, a) in self.adapters.iter().enumerate() {
            a.visit(&join(prefix, &format!("adapter{i}")), f);
        }
        for (i, c) in self.refine.iter().enumerate() {
            c.visit(&join(prefix, &format!("refine{i}")), f);
        }
        self.out.visit(&join(prefix, "out"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.query.visit_mut(&join(prefix, "query"), f);
        self.key.visit_mut(&join(prefix, "key"), f);
        self.feature.visit_mut(&join(prefix, "feature"), f);
        self.fuse.visit_mut(&join(prefix, "fuse"), f);
        for (i, a) in self.adapters.iter_mut().enumerate() {
            a.visit_mut(&join(prefix, &format!("adapter{i}")), f);
        }
        for (i, c) in self.refine.iter_mut().enumerate() {
            c.visit_mut(&join(prefix, &format!("refine{i}")), f);
        }
        self.out.visit_mut(&join(prefix, "out"), f);
    }
}

/// Union over confident queries of heatmap pixels at or above
/// `mask_threshold`, enlarged by `factor` with nearest-neighbour sampling.
/// Returns the mask row-major together with its size.
pub fn merge_masks(
    heatmaps: &[Tensor],
    confidence: &[f64],
    conf_threshold: f64,
    mask_threshold: f64,
    factor: usize,
) -> (Vec<bool>, usize, usize) {
    let Some(first) = heatmaps.first() else {
        return (Vec::new(), 0, 0);
    };
    let (h, w) = (first.h, first.w);
    let mut low = alloc::vec![false; h * w];
    for (hm, &c) in heatmaps.iter().zip(confidence) {
        if c < conf_threshold {
            continue;
        }
        for (m, v) in low.iter_mut().zip(&hm.data) {
            *m |= *v >= mask_threshold;
        }
    }
    let (oh, ow) = (h * factor, w * factor);
    let mut out = alloc::vec![false; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = low[(y / factor) * w + x / factor];
        }
    }
    (out, oh, ow)
}
