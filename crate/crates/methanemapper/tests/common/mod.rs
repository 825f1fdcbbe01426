#![allow(dead_code)]

use std::path::{Path, PathBuf};

use methanemapper::pipeline::cmd_synth;
use methanemapper::PipelineConfig;

pub fn config(out: &Path, pairs: &[(&str, &str)]) -> PipelineConfig {
    let mut all = vec![("output_dir".to_string(), out.display().to_string())];
    all.extend(pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    PipelineConfig::from_pairs(&all).unwrap()
}

/// Small detector settings for tests that run the full pipeline.
pub const TINY_DETECTOR: [(&str, &str); 8] = [
    ("detector.d_model", "32"),
    ("detector.n_queries", "10"),
    ("detector.n_layers", "2"),
    ("detector.n_heads", "4"),
    ("detector.backbone_channels", "16"),
    ("detector.embed_out", "64"),
    ("detector.ffn_dim", "64"),
    ("detector.mask_dim", "4"),
];

/// Writes a synthetic scene into `dir` and returns the header paths.
pub struct SynthScene {
    pub dir: PathBuf,
    pub cube: PathBuf,
    pub glt: PathBuf,
    pub locations: PathBuf,
    pub patches: PathBuf,
    pub gt_dir: PathBuf,
}

pub fn synth(dir: &Path, pairs: &[(&str, &str)]) -> SynthScene {
    let cfg = config(dir, pairs);
    cmd_synth(&cfg).unwrap();
    SynthScene {
        dir: dir.to_path_buf(),
        cube: dir.join(format!("{}.hdr", cfg.name)),
        glt: dir.join(format!("{}_glt.hdr", cfg.name)),
        locations: dir.join(format!("{}_loc.hdr", cfg.name)),
        patches: dir.join("patches").join("patches.json"),
        gt_dir: dir.join("gt"),
    }
}

pub fn path(p: &Path) -> String {
    p.display().to_string()
}
