use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use super::layers::{join, Conv2d, Params};
use super::tensor::Tensor;
use crate::{Error, Result};

pub const STAGES: usize = 5;
/// Total spatial reduction of the five stride-2 stages.
pub const DOWNSAMPLE: usize = 1 << STAGES;

/// Output channels per stage for a backbone ending at `n` channels.
pub fn stage_widths(n: usize) -> [usize; STAGES] {
    [(n / 8).max(8), (n / 4).max(8), (n / 2).max(8), n, n]
}

/// Five 3x3 stride-2 convolutions, each followed by a ReLU.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub stages: Vec<Conv2d>,
}

impl Backbone {
    pub fn new(rng: &mut ChaCha8Rng, in_channels: usize, out_channels: usize) -> Self {
        let mut cin = in_channels;
        let stages = stage_widths(out_channels)
            .iter()
            .map(|&cout| {
                let conv = Conv2d::new(rng, 3, 2, cin, cout);
                cin = cout;
                conv
            })
            .collect();
        Self { stages }
    }

    pub fn in_channels(&self) -> usize {
        self.stages[0].cin
    }

    pub fn out_channels(&self) -> usize {
        self.stages[STAGES - 1].cout
    }

    /// Output of every stage, finest first: strides 2, 4, 8, 16, 32.
    pub fn forward_stages(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        check_geometry(x.h, x.w)?;
        if x.c != self.in_channels() {
            return Err(Error::DimensionMismatch(format!(
                "backbone expects {} channels, got {}",
                self.in_channels(),
                x.c
            )));
        }
        let mut outs: Vec<Tensor> = Vec::with_capacity(STAGES);
        for conv in &self.stages {
            let input = outs.last().unwrap_or(x);
            let y = conv.forward(input)?.relu();
            outs.push(y);
        }
        Ok(outs)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_stages(x)?.pop().expect("five stages"))
    }
}

pub fn check_geometry(h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || !h.is_multiple_of(DOWNSAMPLE) || !w.is_multiple_of(DOWNSAMPLE) {
        return Err(Error::BadGeometry(format!(
            "{h}x{w} input is not a positive multiple of {DOWNSAMPLE}"
        )));
    }
    Ok(())
}

impl Params for Backbone {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, s) in self.stages.iter().enumerate() {
            s.visit(&join(prefix, &format!("stage{i}")), f);
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.visit_mut(&join(prefix, &format!("stage{i}")), f);
        }
    }
}
