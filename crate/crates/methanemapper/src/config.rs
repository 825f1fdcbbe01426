//! `key = value` pipeline configuration with command-line overrides.
//!
//! Every key has a default, so a run is fully described by the resolved
//! table. Its SHA-256 over the canonical `key=value` lines is the config
//! hash stamped into every artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use methanemapper_core::detector::DetectorConfig;
use methanemapper_core::matchloss::LossWeights;
use methanemapper_core::slf::MAX_SENSOR_WINDOW;
use sha2::{Digest, Sha256};

use crate::error::{AppError, Context, Result};
use crate::Provenance;

const DEFAULTS: &[(&str, &str)] = &[
    ("annotations", ""),
    ("column_window", "11"),
    ("cube", ""),
    ("detector.backbone_channels", "64"),
    ("detector.conf_threshold", "0.5"),
    ("detector.d_model", "256"),
    ("detector.embed_out", "512"),
    ("detector.ffn_dim", "2048"),
    ("detector.mask_dim", "8"),
    ("detector.mask_threshold", "0.5"),
    ("detector.n_heads", "8"),
    ("detector.n_layers", "6"),
    ("detector.n_queries", "100"),
    ("enhancement", ""),
    ("eps_scale", "1e-6"),
    ("filter", "slf"),
    ("glt", ""),
    ("gt_dir", ""),
    ("input", ""),
    ("iou_threshold", "0.5"),
    ("locations", ""),
    ("loss.class", "1"),
    ("loss.giou", "2"),
    ("loss.l1", "5"),
    ("loss.mask", "1"),
    ("min_pixels", "10000"),
    ("name", "scene"),
    ("output_dir", "out"),
    ("pred_dir", ""),
    ("seed", "0"),
    ("sensor_window", "11"),
    ("signature", ""),
    ("synth.bands", "16"),
    ("synth.cols", "160"),
    ("synth.plume_amplitude", "1"),
    ("synth.plume_radius", "3"),
    ("synth.rows", "128"),
    ("threads", "0"),
    ("tile_overlap", "128"),
    ("tile_size", "256"),
    ("water_threshold", "0.3"),
    ("weights", ""),
];

/// Which filter `enhance` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Slf,
    Traditional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub plume_amplitude: f64,
    pub plume_radius: f64,
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub cube: Option<PathBuf>,
    pub glt: Option<PathBuf>,
    pub locations: Option<PathBuf>,
    pub signature: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub enhancement: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub gt_dir: Option<PathBuf>,
    pub pred_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub name: String,
    pub filter: FilterKind,
    pub sensor_window: usize,
    pub column_window: usize,
    pub eps_scale: f64,
    pub min_pixels: usize,
    pub water_threshold: f64,
    pub tile_size: usize,
    pub tile_overlap: usize,
    pub detector: DetectorConfig,
    pub loss: LossWeights,
    pub iou_threshold: f64,
    pub synth: SynthParams,
    pub seed: u64,
    pub threads: usize,
    table: BTreeMap<String, String>,
}

fn parse_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| AppError::user(format!("line {}: expected key = value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parses one `key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| AppError::user(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl PipelineConfig {
    /// Defaults, then the file (if any), then the overrides in order.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = Vec::new();
        if let Some(f) = file {
            pairs = parse_lines(&fs::read_to_string(f).at(f)?).at(f)?;
        }
        pairs.extend(overrides.iter().cloned());
        Self::from_pairs(&pairs)
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut table: BTreeMap<String, String> =
            DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in pairs {
            match table.get_mut(k.as_str()) {
                Some(slot) => *slot = v.clone(),
                None => return Err(AppError::user(format!("unknown configuration key `{k}`"))),
            }
        }
        Self::from_table(table)
    }

    fn from_table(table: BTreeMap<String, String>) -> Result<Self> {
        let t = Table(&table);
        let filter = match t.str("filter") {
            "slf" => FilterKind::Slf,
            "traditional" => FilterKind::Traditional,
            other => return Err(AppError::user(format!("filter must be slf or traditional, got `{other}`"))),
        };
        let seed = t.parse("seed")?;
        let detector = DetectorConfig {
            d_model: t.parse("detector.d_model")?,
            n_queries: t.parse("detector.n_queries")?,
            n_layers: t.parse("detector.n_layers")?,
            n_heads: t.parse("detector.n_heads")?,
            backbone_channels: t.parse("detector.backbone_channels")?,
            embed_out: t.parse("detector.embed_out")?,
            ffn_dim: t.parse("detector.ffn_dim")?,
            mask_dim: t.parse("detector.mask_dim")?,
            conf_threshold: t.parse("detector.conf_threshold")?,
            mask_threshold: t.parse("detector.mask_threshold")?,
            seed,
            ..DetectorConfig::default()
        };
        let cfg = Self {
            cube: t.path("cube"),
            glt: t.path("glt"),
            locations: t.path("locations"),
            signature: t.path("signature"),
            annotations: t.path("annotations"),
            enhancement: t.path("enhancement"),
            weights: t.path("weights"),
            input: t.path("input"),
            gt_dir: t.path("gt_dir"),
            pred_dir: t.path("pred_dir"),
            output_dir: PathBuf::from(t.str("output_dir")),
            name: t.str("name").to_string(),
            filter,
            sensor_window: t.parse("sensor_window")?,
            column_window: t.parse("column_window")?,
            eps_scale: t.parse("eps_scale")?,
            min_pixels: t.parse("min_pixels")?,
            water_threshold: t.parse("water_threshold")?,
            tile_size: t.parse("tile_size")?,
            tile_overlap: t.parse("tile_overlap")?,
            detector,
            loss: LossWeights {
                class: t.parse("loss.class")?,
                l1: t.parse("loss.l1")?,
                giou: t.parse("loss.giou")?,
                mask: t.parse("loss.mask")?,
            },
            iou_threshold: t.parse("iou_threshold")?,
            synth: SynthParams {
                rows: t.parse("synth.rows")?,
                cols: t.parse("synth.cols")?,
                bands: t.parse("synth.bands")?,
                plume_amplitude: t.parse("synth.plume_amplitude")?,
                plume_radius: t.parse("synth.plume_radius")?,
            },
            seed,
            threads: t.parse("threads")?,
            table,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(AppError::user("name must be a non-empty file stem"));
        }
        if !(1..=MAX_SENSOR_WINDOW).contains(&self.sensor_window) {
            return Err(AppError::user(format!("sensor_window must be in 1..={MAX_SENSOR_WINDOW}")));
        }
        if self.column_window == 0 {
            return Err(AppError::user("column_window must be at least 1"));
        }
        if !(self.eps_scale > 0.0) {
            return Err(AppError::user("eps_scale must be positive"));
        }
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(AppError::user("iou_threshold must lie in [0, 1]"));
        }
        if self.tile_overlap >= self.tile_size {
            return Err(AppError::user("tile_overlap must be smaller than tile_size"));
        }
        self.detector.validate().map_err(AppError::from)?;
        Ok(())
    }

    /// Canonical text of the resolved table, sorted by key.
    pub fn canonical(&self) -> String {
        self.table.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.hash(),
            seed: self.seed,
        }
    }

    /// Resolved value of a key.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.table.get(key).map(String::as_str)
    }

    /// Fails with a user error naming `key` when the path is unset or
    /// does not exist.
    pub fn require_path<'a>(&self, path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        let p = path
            .as_deref()
            .ok_or_else(|| AppError::user(format!("configuration key `{key}` is required")))?;
        if !p.exists() {
            return Err(AppError::user(format!("{key}: {} does not exist", p.display())));
        }
        Ok(p)
    }
}

struct Table<'a>(&'a BTreeMap<String, String>);

impl Table<'_> {
    fn str(&self, k: &str) -> &str {
        self.0[k].as_str()
    }

    fn path(&self, k: &str) -> Option<PathBuf> {
        let v = self.str(k);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    fn parse<T: std::str::FromStr>(&self, k: &str) -> Result<T> {
        self.str(k)
            .parse()
            .map_err(|_| AppError::user(format!("configuration key `{k}`: cannot parse `{}`", self.str(k))))
    }
}
