//! Forward-only plume detector with seeded random weights.
//!
//! Data flow for one tile of `H0 x W0` pixels (`H = H0/32`, `W = W0/32`):
//!
//! ```text
//! rgb  (H0,W0,3)  -> backbone -> (H,W,N) \
//!                                          concat -> 1x1 -> f_comb (H,W,N) -> 1x1 -> f_z (H,W,d)
//! swir (H0,W0,S)  -> backbone -> (H,W,N) /
//! f_z + positions -> encoder -> f_e (H,W,d)
//! enhancement (H0,W0,1) -> backbone -> 1x1 -> f_mc (H,W,d)
//! queries (Q,d), f_mc -> query refiner -> Q_ref (Q,d)
//! f_e, positions, Q_ref -> decoder -> E_out (Q,embed)
//! E_out -> boxes (Q,4), logits (Q,2)
//! E_out, f_e, rgb pyramid -> heatmaps (Q, H0/4, W0/4) -> merged mask (H0,W0)
//! ```

mod backbone;
mod heads;
mod layers;
mod tensor;
mod transformer;

pub use backbone::{check_geometry, stage_widths, Backbone, DOWNSAMPLE, STAGES};
pub use heads::{merge_masks, sigmoid, BoxHead, MaskHead, PYRAMID_STAGES};
pub use layers::{head_weights, softmax_rows, Conv2d, FeedForward, LayerNorm, Linear, MultiHeadAttention, Params};
pub use tensor::Tensor;
pub use transformer::{
    positional_embedding, Decoder, DecoderLayer, Encoder, EncoderLayer, QueryRefiner, RefinerLayer,
};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::Matrix;
use crate::math;
use crate::{Error, Result};

/// Mask heatmaps are produced at this fraction of the tile size.
pub const MASK_STRIDE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub d_model: usize,
    pub n_queries: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub backbone_channels: usize,
    pub embed_out: usize,
    pub ffn_dim: usize,
    pub mask_dim: usize,
    pub rgb_channels: usize,
    pub swir_channels: usize,
    pub conf_threshold: f64,
    pub mask_threshold: f64,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            d_model: 256,
            n_queries: 100,
            n_layers: 6,
            n_heads: 8,
            backbone_channels: 64,
            embed_out: 512,
            ffn_dim: 2048,
            mask_dim: 8,
            rgb_channels: 3,
            swir_channels: 100,
            conf_threshold: 0.5,
            mask_threshold: 0.5,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    /// Small widths for fast tests; same structure as the default.
    pub fn tiny() -> Self {
        Self {
            d_model: 32,
            n_queries: 10,
            n_layers: 2,
            n_heads: 4,
            backbone_channels: 16,
            embed_out: 64,
            ffn_dim: 64,
            mask_dim: 4,
            swir_channels: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("n_queries", self.n_queries),
            ("n_heads", self.n_heads),
            ("backbone_channels", self.backbone_channels),
            ("embed_out", self.embed_out),
            ("ffn_dim", self.ffn_dim),
            ("mask_dim", self.mask_dim),
            ("rgb_channels", self.rgb_channels),
            ("swir_channels", self.swir_channels),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidParameter(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.n_heads
            )));
        }
        if !self.d_model.is_multiple_of(2) {
            return Err(Error::OddDimension(self.d_model));
        }
        Ok(())
    }
}

/// Per-query outputs for one tile.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    /// `(cx, cy, w, h)` normalized to the tile.
    pub boxes: Vec<[f64; 4]>,
    /// Logits over `{plume, no-object}`.
    pub logits: Vec<[f64; 2]>,
    /// One `H0/4 x W0/4 x 1` sigmoid map per query.
    pub heatmaps: Vec<Tensor>,
    /// Merged binary mask at tile resolution, row-major.
    pub mask: Vec<bool>,
    pub mask_rows: usize,
    pub mask_cols: usize,
}

/// Softmax probability of the plume class.
pub fn plume_probability(logits: [f64; 2]) -> f64 {
    let m = logits[0].max(logits[1]);
    let a = math::exp(logits[0] - m);
    let b = math::exp(logits[1] - m);
    a / (a + b)
}

impl DetectionSet {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn confidence(&self) -> Vec<f64> {
        self.logits.iter().map(|l| plume_probability(*l)).collect()
    }
}

/// Network inputs for one tile.
#[derive(Debug, Clone)]
pub struct TileInput {
    pub rgb: Tensor,
    pub swir: Tensor,
    /// Single-channel enhancement map.
    pub enhancement: Tensor,
}

/// Every named intermediate of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub rgb_stages: Vec<Tensor>,
    pub f_rgb: Tensor,
    pub f_swir: Tensor,
    pub f_comb: Tensor,
    pub f_z: Tensor,
    pub positions: Matrix,
    pub f_e: Tensor,
    pub f_mc: Tensor,
    pub queries: Matrix,
    pub q_ref: Matrix,
    pub e_out: Matrix,
    /// Attention weights of every block in execution order: encoder,
    /// refiner, decoder, mask head.
    pub attention: Vec<Matrix>,
    pub detections: DetectionSet,
}

#[derive(Debug, Clone)]
pub struct Detector {
    pub config: DetectorConfig,
    pub rgb_backbone: Backbone,
    pub swir_backbone: Backbone,
    pub concat_proj: Linear,
    pub input_proj: Linear,
    pub encoder: Encoder,
    pub sfg_backbone: Backbone,
    pub sfg_proj: Linear,
    pub queries: Matrix,
    pub refiner: QueryRefiner,
    pub decoder: Decoder,
    pub box_head: BoxHead,
    pub class_head: Linear,
    pub mask_head: MaskHead,
}

impl Detector {
    /// Builds every weight from a single seeded stream in a fixed order.
    pub fn new(config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let rng = &mut ChaCha8Rng::seed_from_u64(c.seed);
        let n = c.backbone_channels;
        let d = c.d_model;
        let rgb_backbone = Backbone::new(rng, c.rgb_channels, n);
        let swir_backbone = Backbone::new(rng, c.swir_channels, n);
        let concat_proj = Linear::new(rng, 2 * n, n);
        let input_proj = Linear::new(rng, n, d);
        let encoder = Encoder {
            layers: (0..c.n_layers)
                .map(|_| EncoderLayer::new(rng, d, c.n_heads, c.ffn_dim))
                .collect::<Result<_>>()?,
        };
        let sfg_backbone = Backbone::new(rng, 1, n);
        let sfg_proj = Linear::new(rng, n, d);
        let queries = Matrix::from_vec(c.n_queries, d, layers::uniform(rng, c.n_queries * d, 1.0));
        let refiner = QueryRefiner {
            layers: (0..c.n_layers)
                .map(|_| RefinerLayer::new(rng, d, c.n_heads, c.ffn_dim))
                .collect::<Result<_>>()?,
        };
        let decoder = Decoder {
            layers: (0..c.n_layers)
                .map(|_| DecoderLayer::new(rng, d, c.n_heads, c.ffn_dim))
                .collect::<Result<_>>()?,
            out: Linear::new(rng, d, c.embed_out),
        };
        let box_head = BoxHead::new(rng, c.embed_out, d);
        let class_head = Linear::new(rng, c.embed_out, 2);
        let mask_head = MaskHead::new(rng, c.embed_out, d, c.n_heads, c.mask_dim, n);
        Ok(Self {
            config,
            rgb_backbone,
            swir_backbone,
            concat_proj,
            input_proj,
            encoder,
            sfg_backbone,
            sfg_proj,
            queries,
            refiner,
            decoder,
            box_head,
            class_head,
            mask_head,
        })
    }

    /// Channel concatenation followed by the 1x1 projection back to `N`.
    pub fn concat_project(&self, f_rgb: &Tensor, f_swir: &Tensor) -> Result<Tensor> {
        if (f_rgb.h, f_rgb.w) != (f_swir.h, f_swir.w) {
            return Err(Error::DimensionMismatch(format!(
                "feature maps {}x{} and {}x{}",
                f_rgb.h, f_rgb.w, f_swir.h, f_swir.w
            )));
        }
        self.concat_proj.forward_map(&f_rgb.concat(f_swir))
    }

    /// Candidate features from a single-channel enhancement map.
    pub fn sfg_forward(&self, enhancement: &Tensor) -> Result<Tensor> {
        let f = self.sfg_backbone.forward(enhancement)?;
        self.sfg_proj.forward_map(&f)
    }

    /// Box and class outputs for each decoder embedding.
    pub fn ffn_heads(&self, e_out: &Matrix) -> Result<(Vec<[f64; 4]>, Vec<[f64; 2]>)> {
        let boxes = self.box_head.forward(e_out)?;
        let l = self.class_head.forward(e_out)?;
        let logits = (0..l.rows).map(|r| [l.get(r, 0), l.get(r, 1)]).collect();
        Ok((boxes, logits))
    }

    pub fn forward(&self, input: &TileInput) -> Result<DetectionSet> {
        Ok(self.run(input, false)?.detections)
    }

    /// Forward pass keeping every intermediate and attention map.
    pub fn forward_trace(&self, input: &TileInput) -> Result<ForwardTrace> {
        self.run(input, true)
    }

    fn run(&self, input: &TileInput, record: bool) -> Result<ForwardTrace> {
        let (h0, w0) = (input.rgb.h, input.rgb.w);
        check_geometry(h0, w0)?;
        for (name, t) in [("swir", &input.swir), ("enhancement", &input.enhancement)] {
            if (t.h, t.w) != (h0, w0) {
                return Err(Error::BadGeometry(format!(
                    "{name} input {}x{} vs rgb {h0}x{w0}",
                    t.h, t.w
                )));
            }
        }
        let mut attention = Vec::new();

        let rgb_stages = self.rgb_backbone.forward_stages(&input.rgb)?;
        let f_rgb = rgb_stages[STAGES - 1].clone();
        let f_swir = self.swir_backbone.forward(&input.swir)?;
        let f_comb = self.concat_project(&f_rgb, &f_swir)?;
        let f_z = self.input_proj.forward_map(&f_comb)?;
        let (h, w) = (f_z.h, f_z.w);
        let positions = positional_embedding(h, w, self.config.d_model)?;

        let mut sink: Vec<Matrix> = Vec::new();
        let f_e_tok = self
            .encoder
            .forward(&f_z.tokens(), &positions, record.then_some(&mut sink))?;
        attention.append(&mut sink);
        let f_e = Tensor::from_tokens(h, w, f_e_tok);
        let f_mc = self.sfg_forward(&input.enhancement)?;
        let q_ref = self
            .refiner
            .forward(&f_mc.tokens(), &self.queries, record.then_some(&mut sink))?;
        attention.append(&mut sink);
        let e_out = self
            .decoder
            .forward(&f_e.tokens(), &positions, &q_ref, record.then_some(&mut sink))?;
        attention.append(&mut sink);

        let (boxes, logits) = self.ffn_heads(&e_out)?;
        let (heatmaps, mask_attn) = self.mask_head.forward(&e_out, &f_e, &positions, &rgb_stages)?;
        if record {
            attention.extend(mask_attn);
        }
        let confidence: Vec<f64> = logits.iter().map(|l| plume_probability(*l)).collect();
        let (mask, mask_rows, mask_cols) = merge_masks(
            &heatmaps,
            &confidence,
            self.config.conf_threshold,
            self.config.mask_threshold,
            MASK_STRIDE,
        );
        Ok(ForwardTrace {
            rgb_stages,
            f_rgb,
            f_swir,
            f_comb,
            f_z,
            positions,
            f_e,
            f_mc,
            queries: self.queries.clone(),
            q_ref,
            e_out,
            attention,
            detections: DetectionSet {
                boxes,
                logits,
                heatmaps,
                mask,
                mask_rows,
                mask_cols,
            },
        })
    }

    /// Sets every bias (including layer-norm shifts) to zero.
    pub fn zero_biases(&mut self) {
        self.visit_mut("", &mut |name, v| {
            if name.ends_with(".bias") {
                v.iter_mut().for_each(|x| *x = 0.0);
            }
        });
    }

    /// Names and lengths of every parameter buffer in serialization order.
    pub fn manifest(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, v| out.push((String::from(name), v.len())));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.manifest().iter().map(|(_, n)| n).sum()
    }
}

impl Params for Detector {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        use layers::join;
        self.rgb_backbone.visit(&join(prefix, "rgb_backbone"), f);
        self.swir_backbone.visit(&join(prefix, "swir_backbone"), f);
        self.concat_proj.visit(&join(prefix, "concat_proj"), f);
        self.input_proj.visit(&join(prefix, "input_proj"), f);
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.sfg_backbone.visit(&join(prefix, "sfg_backbone"), f);
        self.sfg_proj.visit(&join(prefix, "sfg_proj"), f);
        f(&join(prefix, "queries"), &self.queries.data);
        self.refiner.visit(&join(prefix, "refiner"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
        self.box_head.visit(&join(prefix, "box_head"), f);
        self.class_head.visit(&join(prefix, "class_head"), f);
        self.mask_head.visit(&join(prefix, "mask_head"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        use layers::join;
        self.rgb_backbone.visit_mut(&join(prefix, "rgb_backbone"), f);
        self.swir_backbone.visit_mut(&join(prefix, "swir_backbone"), f);
        self.concat_proj.visit_mut(&join(prefix, "concat_proj"), f);
        self.input_proj.visit_mut(&join(prefix, "input_proj"), f);
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.sfg_backbone.visit_mut(&join(prefix, "sfg_backbone"), f);
        self.sfg_proj.visit_mut(&join(prefix, "sfg_proj"), f);
        f(&join(prefix, "queries"), &mut self.queries.data);
        self.refiner.visit_mut(&join(prefix, "refiner"), f);
        self.decoder.visit_mut(&join(prefix, "decoder"), f);
        self.box_head.visit_mut(&join(prefix, "box_head"), f);
        self.class_head.visit_mut(&join(prefix, "class_head"), f);
        self.mask_head.visit_mut(&join(prefix, "mask_head"), f);
    }
}

/// Per-channel standardization to zero mean and unit variance over the
/// tile. Constant channels become zero.
pub fn standardize_channels(t: &mut Tensor) {
    let n = (t.h * t.w) as f64;
    if n == 0.0 {
        return;
    }
    for ch in 0..t.c {
        let mean = t.data.iter().skip(ch).step_by(t.c).sum::<f64>() / n;
        let var = t.data.iter().skip(ch).step_by(t.c).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = if var > 0.0 { 1.0 / math::sqrt(var) } else { 0.0 };
        for v in t.data.iter_mut().skip(ch).step_by(t.c) {
            *v = (*v - mean) * inv;
        }
    }
}
