//! Wavelength-domain helpers: band selection, Gaussian band averaging,
//! RGB composition, NDVI/NDWI and the CH4 target signature.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::grid::MaskedGrid;
use crate::hsi::{Block, ByteSource, CubeMeta, HyperCube};
use crate::math;
use crate::{Error, Result};

/// Gaussian width used when composing RGB from visible bands, in nm.
pub const RGB_SIGMA_NM: f64 = 30.0;
/// Gaussian width for the NIR/red/MIR inputs of the indices, in nm.
pub const INDEX_SIGMA_NM: f64 = 20.0;
/// Nominal colour centres (red, green, blue) in nm.
pub const RGB_CENTERS_NM: [f64; 3] = [650.0, 550.0, 450.0];
pub const VISIBLE_NM: (f64, f64) = (400.0, 700.0);
pub const SWIR_NM: (f64, f64) = (2000.0, 2500.0);
pub const RED_NM: f64 = 660.0;
pub const NIR_NM: f64 = 880.0;
pub const MIR_NM: f64 = 1240.0;

/// Contiguous run of bands whose centres fall in `[lo_nm, hi_nm]`.
/// `hi_index` is inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandRange {
    pub lo_index: usize,
    pub hi_index: usize,
    pub lo_nm: f64,
    pub hi_nm: f64,
}

impl BandRange {
    pub fn len(&self) -> usize {
        self.hi_index - self.lo_index + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.lo_index..self.hi_index + 1
    }
}

pub fn select_bands(meta: &CubeMeta, lo_nm: f64, hi_nm: f64) -> Result<BandRange> {
    select_bands_in(&meta.wavelengths, lo_nm, hi_nm)
}

/// Band selection over a bare wavelength grid (strictly increasing).
pub fn select_bands_in(wavelengths: &[f64], lo_nm: f64, hi_nm: f64) -> Result<BandRange> {
    let lo = wavelengths.partition_point(|w| *w < lo_nm);
    let hi = wavelengths.partition_point(|w| *w <= hi_nm);
    if lo >= hi {
        return Err(Error::EmptySelection { lo_nm, hi_nm });
    }
    Ok(BandRange {
        lo_index: lo,
        hi_index: hi - 1,
        lo_nm,
        hi_nm,
    })
}

/// Normalized Gaussian weights centred on `center_nm`, truncated at three
/// sigma and restricted to `within` when given. Weights sum to one.
pub fn gaussian_weights(
    wavelengths: &[f64],
    center_nm: f64,
    sigma_nm: f64,
    within: Option<BandRange>,
) -> Result<Vec<(usize, f64)>> {
    let (lo, hi) = (center_nm - 3.0 * sigma_nm, center_nm + 3.0 * sigma_nm);
    let mut out: Vec<(usize, f64)> = wavelengths
        .iter()
        .enumerate()
        .filter(|(i, w)| {
            **w >= lo && **w <= hi && within.is_none_or(|r| r.range().contains(i))
        })
        .map(|(i, w)| {
            let z = (w - center_nm) / sigma_nm;
            (i, math::exp(-0.5 * z * z))
        })
        .collect();
    let total: f64 = out.iter().map(|(_, w)| w).sum();
    if out.is_empty() || !(total > 0.0) {
        return Err(Error::EmptySelection { lo_nm: lo, hi_nm: hi });
    }
    out.iter_mut().for_each(|(_, w)| *w /= total);
    Ok(out)
}

/// Weighted band average of one pixel of `block`; `band_offset` is the cube
/// band index of the block's first band.
#[inline]
fn band_average(block: &Block, row: usize, col: usize, band_offset: usize, weights: &[(usize, f64)]) -> f64 {
    let px = block.pixel(row, col);
    weights.iter().map(|(b, w)| w * px[b - band_offset]).sum()
}

fn span(weights: &[&[(usize, f64)]]) -> core::ops::Range<usize> {
    let lo = weights.iter().flat_map(|w| w.iter().map(|(b, _)| *b)).min().unwrap_or(0);
    let hi = weights.iter().flat_map(|w| w.iter().map(|(b, _)| *b)).max().unwrap_or(0);
    lo..hi + 1
}

/// Three-channel image, `(row, col, channel)` order, channels R, G, B.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
}

impl RgbImage {
    pub fn channel(&self, row: usize, col: usize, c: usize) -> f64 {
        self.data[(row * self.cols + col) * 3 + c]
    }
}

/// Per-channel weights for RGB composition over the visible bands.
pub fn rgb_weights(wavelengths: &[f64]) -> Result<[Vec<(usize, f64)>; 3]> {
    let visible = select_bands_in(wavelengths, VISIBLE_NM.0, VISIBLE_NM.1)?;
    let [r, g, b] = RGB_CENTERS_NM;
    Ok([
        gaussian_weights(wavelengths, r, RGB_SIGMA_NM, Some(visible))?,
        gaussian_weights(wavelengths, g, RGB_SIGMA_NM, Some(visible))?,
        gaussian_weights(wavelengths, b, RGB_SIGMA_NM, Some(visible))?,
    ])
}

/// RGB composite of a block holding bands `band_offset..` of the cube.
pub fn compose_rgb_block(block: &Block, wavelengths: &[f64], band_offset: usize) -> Result<RgbImage> {
    let weights = rgb_weights(wavelengths)?;
    let need = span(&[&weights[0], &weights[1], &weights[2]]);
    if need.start < band_offset || need.end > band_offset + block.bands {
        return Err(Error::DimensionMismatch(format!(
            "block bands {}..{} do not cover visible bands {:?}",
            band_offset,
            band_offset + block.bands,
            need
        )));
    }
    let n = block.rows * block.cols;
    let mut data = Vec::with_capacity(n * 3);
    let mut valid = Vec::with_capacity(n);
    for r in 0..block.rows {
        for c in 0..block.cols {
            let ok = need.clone().all(|b| block.valid[block.offset(r, c) + b - band_offset]);
            valid.push(ok);
            for w in &weights {
                data.push(if ok { band_average(block, r, c, band_offset, w) } else { 0.0 });
            }
        }
    }
    Ok(RgbImage {
        rows: block.rows,
        cols: block.cols,
        data,
        valid,
    })
}

pub fn compose_rgb<S: ByteSource>(cube: &HyperCube<S>) -> Result<RgbImage> {
    let weights = rgb_weights(cube.wavelengths())?;
    let bands = span(&[&weights[0], &weights[1], &weights[2]]);
    let mut out = RgbImage {
        rows: cube.height(),
        cols: cube.width(),
        data: Vec::with_capacity(cube.height() * cube.width() * 3),
        valid: Vec::with_capacity(cube.height() * cube.width()),
    };
    for rows in cube.strips(crate::hsi::STRIP_ROWS) {
        let block = cube.read_block(rows, 0..cube.width(), bands.clone())?;
        let part = compose_rgb_block(&block, cube.wavelengths(), bands.start)?;
        out.data.extend_from_slice(&part.data);
        out.valid.extend_from_slice(&part.valid);
    }
    Ok(out)
}

/// Normalized-difference index field; valid entries lie in `[-1, 1]` when
/// the inputs are non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexMap(pub MaskedGrid);

impl core::ops::Deref for IndexMap {
    type Target = MaskedGrid;
    fn deref(&self) -> &MaskedGrid {
        &self.0
    }
}

/// `(a - b) / (a + b)`, `None` when the denominator is not positive.
#[inline]
pub fn normalized_difference(a: f64, b: f64) -> Option<f64> {
    let den = a + b;
    (den > 0.0).then(|| (a - b) / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralIndex {
    /// (NIR - red) / (NIR + red)
    Ndvi,
    /// (NIR - MIR) / (NIR + MIR)
    Ndwi,
}

impl SpectralIndex {
    fn partner_nm(self) -> f64 {
        match self {
            Self::Ndvi => RED_NM,
            Self::Ndwi => MIR_NM,
        }
    }
}

struct IndexWeights {
    nir: Vec<(usize, f64)>,
    partner: Vec<(usize, f64)>,
}

fn index_weights(wavelengths: &[f64], index: SpectralIndex) -> Result<IndexWeights> {
    Ok(IndexWeights {
        nir: gaussian_weights(wavelengths, NIR_NM, INDEX_SIGMA_NM, None)?,
        partner: gaussian_weights(wavelengths, index.partner_nm(), INDEX_SIGMA_NM, None)?,
    })
}

fn index_block(block: &Block, band_offset: usize, w: &IndexWeights, out: &mut MaskedGrid, row0: usize) {
    let need = span(&[&w.nir, &w.partner]);
    for r in 0..block.rows {
        for c in 0..block.cols {
            let base = block.offset(r, c);
            let ok = w
                .nir
                .iter()
                .chain(&w.partner)
                .all(|(b, _)| block.valid[base + b - band_offset]);
            debug_assert!(need.start >= band_offset);
            if !ok {
                continue;
            }
            let nir = band_average(block, r, c, band_offset, &w.nir);
            let partner = band_average(block, r, c, band_offset, &w.partner);
            if let Some(v) = normalized_difference(nir, partner) {
                out.set(row0 + r, c, v);
            }
        }
    }
}

/// Index over a whole cube.
pub fn spectral_index<S: ByteSource>(cube: &HyperCube<S>, index: SpectralIndex) -> Result<IndexMap> {
    let w = index_weights(cube.wavelengths(), index)?;
    let bands = span(&[&w.nir, &w.partner]);
    let mut out = MaskedGrid::new_invalid(cube.height(), cube.width());
    for rows in cube.strips(crate::hsi::STRIP_ROWS) {
        let row0 = rows.start;
        let block = cube.read_block(rows, 0..cube.width(), bands.clone())?;
        index_block(&block, bands.start, &w, &mut out, row0);
    }
    Ok(IndexMap(out))
}

/// Index over a block holding bands `band_offset..` of a cube with the given
/// wavelength grid.
pub fn spectral_index_block(
    block: &Block,
    wavelengths: &[f64],
    band_offset: usize,
    index: SpectralIndex,
) -> Result<IndexMap> {
    let w = index_weights(wavelengths, index)?;
    let need = span(&[&w.nir, &w.partner]);
    if need.start < band_offset || need.end > band_offset + block.bands {
        return Err(Error::DimensionMismatch(format!(
            "block does not cover index bands {need:?}"
        )));
    }
    let mut out = MaskedGrid::new_invalid(block.rows, block.cols);
    index_block(block, band_offset, &w, &mut out, 0);
    Ok(IndexMap(out))
}

pub fn ndvi<S: ByteSource>(cube: &HyperCube<S>) -> Result<IndexMap> {
    spectral_index(cube, SpectralIndex::Ndvi)
}

pub fn ndwi<S: ByteSource>(cube: &HyperCube<S>) -> Result<IndexMap> {
    spectral_index(cube, SpectralIndex::Ndwi)
}

/// Radiance change per unit CH4 mixing-ratio length, one value per cube
/// band.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSignature {
    pub values: Vec<f64>,
    pub wavelengths: Vec<f64>,
    pub provenance: Option<String>,
}

impl TargetSignature {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Fraction of `sum |t|` carried by bands inside `[lo_nm, hi_nm]`.
    pub fn energy_fraction(&self, lo_nm: f64, hi_nm: f64) -> f64 {
        let total: f64 = self.values.iter().map(|v| math::abs(*v)).sum();
        if total == 0.0 {
            return 0.0;
        }
        let inside: f64 = self
            .wavelengths
            .iter()
            .zip(&self.values)
            .filter(|(w, _)| **w >= lo_nm && **w <= hi_nm)
            .map(|(_, v)| math::abs(*v))
            .sum();
        inside / total
    }

    /// Restriction to a band range.
    pub fn subset(&self, bands: core::ops::Range<usize>) -> TargetSignature {
        TargetSignature {
            values: self.values[bands.clone()].to_vec(),
            wavelengths: self.wavelengths[bands].to_vec(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Two-column `(wavelength_nm, coefficient)` table as read from text.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureTable {
    pub rows: Vec<(f64, f64)>,
    pub provenance: Option<String>,
}

/// Parses a signature table. Lines starting with `#` are comments; a comment
/// of the form `# provenance: ...` is kept.
pub fn parse_signature_table(text: &str) -> Result<SignatureTable> {
    let mut rows = Vec::new();
    let mut provenance = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(p) = comment.trim().strip_prefix("provenance:") {
                provenance = Some(p.trim().to_string());
            }
            continue;
        }
        let mut it = line.split_whitespace();
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::MalformedTable(format!("line {}: `{line}`", lineno + 1)))
        };
        let w = parse(it.next())?;
        let v = parse(it.next())?;
        if it.next().is_some() {
            return Err(Error::MalformedTable(format!(
                "line {}: expected two columns",
                lineno + 1
            )));
        }
        rows.push((w, v));
    }
    if rows.len() < 2 {
        return Err(Error::MalformedTable("need at least two rows".into()));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    if rows.windows(2).any(|p| p[0].0 == p[1].0) {
        return Err(Error::MalformedTable("duplicate wavelength".into()));
    }
    Ok(SignatureTable { rows, provenance })
}

impl SignatureTable {
    /// Linear interpolation onto `grid`; zero outside the table's support.
    pub fn resample(&self, grid: &[f64]) -> Vec<f64> {
        let rows = &self.rows;
        let (first, last) = (rows[0].0, rows[rows.len() - 1].0);
        grid.iter()
            .map(|&w| {
                if w < first || w > last {
                    return 0.0;
                }
                let i = rows.partition_point(|(x, _)| *x <= w);
                if i == 0 {
                    return rows[0].1;
                }
                let (x0, y0) = rows[i - 1];
                if x0 == w || i == rows.len() {
                    return y0;
                }
                let (x1, y1) = rows[i];
                y0 + (y1 - y0) * (w - x0) / (x1 - x0)
            })
            .collect()
    }
}

/// Loads a signature table and resamples it onto the cube's band grid.
pub fn load_target_signature(text: &str, grid: &[f64]) -> Result<TargetSignature> {
    let table = parse_signature_table(text)?;
    let values = table.resample(grid);
    if values.iter().all(|v| *v == 0.0) {
        return Err(Error::AllZeroSignature);
    }
    Ok(TargetSignature {
        values,
        wavelengths: grid.to_vec(),
        provenance: table.provenance,
    })
}
