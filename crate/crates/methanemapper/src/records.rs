//! JSON documents exchanged between subcommands. Every document carries a
//! `schema` tag plus the config hash and seed of the run that wrote it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use methanemapper_core::matchloss::{BinaryMask, BoxCxcywh, PlumeClass};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Context, Result};

pub const ANNOTATIONS_SCHEMA: &str = "methanemapper.annotations/1";
pub const PREDICTIONS_SCHEMA: &str = "methanemapper.predictions/1";
pub const DETECTIONS_SCHEMA: &str = "methanemapper.detections/1";
pub const METRICS_SCHEMA: &str = "methanemapper.metrics/1";
pub const ENHANCE_SCHEMA: &str = "methanemapper.enhance/1";
pub const TILES_SCHEMA: &str = "methanemapper.tiles/1";
pub const PATCHES_SCHEMA: &str = "methanemapper.patches/1";
pub const SYNTH_SCHEMA: &str = "methanemapper.synth/1";
pub const PLOT_SCHEMA: &str = "methanemapper.plot/1";

/// Runs of set pixels as `[start, length]` in raster order.
pub type Rle = Vec<[usize; 2]>;

pub fn encode_rle(mask: &[bool]) -> Rle {
    let mut out = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        if mask[i] {
            let start = i;
            while i < mask.len() && mask[i] {
                i += 1;
            }
            out.push([start, i - start]);
        } else {
            i += 1;
        }
    }
    out
}

pub fn decode_rle(rle: &Rle, rows: usize, cols: usize) -> Result<BinaryMask> {
    let mut m = BinaryMask::empty(rows, cols);
    for &[start, len] in rle {
        let end = start
            .checked_add(len)
            .filter(|e| *e <= rows * cols)
            .ok_or_else(|| AppError::user(format!("mask run {start}+{len} outside {rows}x{cols}")))?;
        m.data[start..end].fill(true);
    }
    Ok(m)
}

/// Normalized `(cx, cy, w, h)` of the pixel extent of a mask.
pub fn support_box(mask: &BinaryMask) -> Option<BoxCxcywh> {
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for r in 0..mask.rows {
        for c in 0..mask.cols {
            if mask.get(r, c) {
                r0 = r0.min(r);
                r1 = r1.max(r + 1);
                c0 = c0.min(c);
                c1 = c1.max(c + 1);
            }
        }
    }
    if r0 == usize::MAX {
        return None;
    }
    let (w, h) = (mask.cols as f64, mask.rows as f64);
    Some([
        (c0 + c1) as f64 / 2.0 / w,
        (r0 + r1) as f64 / 2.0 / h,
        (c1 - c0) as f64 / w,
        (r1 - r0) as f64 / h,
    ])
}

pub fn class_name(c: PlumeClass) -> &'static str {
    c.name()
}

pub fn parse_class(s: &str) -> Result<PlumeClass> {
    PlumeClass::ALL
        .into_iter()
        .find(|c| c.name() == s)
        .ok_or_else(|| AppError::user(format!("unknown plume class `{s}`")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub class: String,
    pub bbox: [f64; 4],
    pub mask_rle: Rle,
}

/// Annotated plumes of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub schema: String,
    pub config_hash: String,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub instances: Vec<InstanceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    /// Absent for class-agnostic detections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    pub bbox: [f64; 4],
    pub score: f64,
}

/// Kept detections of one image and their merged plume mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub schema: String,
    pub config_hash: String,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub detections: Vec<PredictionRecord>,
    pub mask_rle: Rle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub index: usize,
    pub row0: usize,
    pub col0: usize,
    pub size: usize,
}

/// One query of one tile, before confidence filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub tile: usize,
    pub query: usize,
    /// Normalized to the tile.
    pub bbox: [f64; 4],
    /// Normalized to the image.
    pub bbox_image: [f64; 4],
    pub score: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionsFile {
    pub schema: String,
    pub config_hash: String,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub tiles: Vec<TileRecord>,
    pub records: Vec<DetectionRecord>,
    pub n_kept: usize,
    pub mask: String,
    pub scores: String,
    pub predictions: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub schema: String,
    pub config_hash: String,
    pub seed: u64,
    pub map_50: f64,
    pub miou: f64,
    pub per_class_ap: BTreeMap<String, f64>,
    pub n_images: usize,
    pub iou_threshold: f64,
    pub class_agnostic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineRecord {
    pub lo: f64,
    pub hi: f64,
    pub gain: f64,
    pub offset: f64,
    pub no_data_rgb: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceFile {
    pub schema: String,
    pub config_hash: String,
    pub seed: u64,
    pub filter: String,
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub n_classes: Option<usize>,
    pub class_counts: Option<Vec<usize>>,
    pub sensor_windows: Option<usize>,
    pub signature_provenance: Option<String>,
    pub valid_pixels: usize,
    pub png_scaling: Option<AffineRecord>,
    pub map: String,
    pub png: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilesFile {
    pub schema: String,
    pub config_hash: String,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub size: usize,
    pub overlap: usize,
    pub tiles: Vec<TileRecord>,
}

/// One expert annotation patch: a concentration raster and the
/// `(lon, lat)` of its corner pixel centres (top-left, top-right,
/// bottom-right, bottom-left).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    /// Header of the concentration raster, relative to the patch list.
    pub concentration: String,
    pub corners: [[f64; 2]; 4],
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchList {
    pub schema: String,
    pub patches: Vec<PatchRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotFile {
    pub schema: String,
    pub config_hash: String,
    pub seed: u64,
    pub input: String,
    pub scaling: Option<AffineRecord>,
}

pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    let mut text = serde_json::to_string_pretty(doc).map_err(|e| AppError::internal(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).at(path)
}

/// Reads a document and checks its schema tag.
pub fn read_json<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<T> {
    let text = fs::read_to_string(path).at(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).at(path)?;
    match value.get("schema").and_then(|s| s.as_str()) {
        Some(s) if s == schema => {}
        other => {
            return Err(AppError::user(format!(
                "{}: expected schema {schema}, found {}",
                path.display(),
                other.unwrap_or("none")
            )))
        }
    }
    serde_json::from_value(value).at(path)
}
