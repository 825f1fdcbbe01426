//! CH4 enhancement by matched filtering.
//!
//! Two estimators share one scoring path ([`MatchedFilter`]):
//!
//! - [`matched_filter_traditional`] takes background statistics from blocks of
//!   adjacent image columns.
//! - [`slf_enhance`] takes them from the pixel's land-cover class, optionally
//!   refined per push-broom sensor window.
//!
//! Scores are standardized: under the background model they have zero mean
//! and unit variance.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::grid::MaskedGrid;
use crate::hsi::{ByteSource, GltMap, HyperCube, STRIP_ROWS};
use crate::landcover::{ClassMap, ClassStats};
use crate::linalg::{dot, Matrix};
use crate::spectra::TargetSignature;
use crate::stats::{MatchedFilter, MeanAccumulator, ScatterAccumulator};
use crate::{Error, Result};

pub const DEFAULT_SENSOR_WINDOW: usize = 11;
pub const DEFAULT_COLUMN_WINDOW: usize = 11;
/// Widest sensor window accepted by [`sensor_groups`].
pub const MAX_SENSOR_WINDOW: usize = 598;

/// Per-pixel standardized CH4 enhancement.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancementMap(pub MaskedGrid);

impl Deref for EnhancementMap {
    type Target = MaskedGrid;
    fn deref(&self) -> &MaskedGrid {
        &self.0
    }
}

fn check_target<S: ByteSource>(cube: &HyperCube<S>, t: &TargetSignature) -> Result<()> {
    if t.len() != cube.bands() {
        return Err(Error::DimensionMismatch(format!(
            "target has {} bands, cube has {}",
            t.len(),
            cube.bands()
        )));
    }
    Ok(())
}

/// Visits every pixel in raster order with its global coordinates and, when
/// all bands are valid, its spectrum.
fn for_each_pixel<S: ByteSource>(
    cube: &HyperCube<S>,
    mut f: impl FnMut(usize, usize, Option<&[f64]>),
) -> Result<()> {
    for rows in cube.strips(STRIP_ROWS) {
        let row0 = rows.start;
        let block = cube.read_rows(rows)?;
        for r in 0..block.rows {
            for c in 0..block.cols {
                let px = block.pixel_valid(r, c).then(|| block.pixel(r, c));
                f(row0 + r, c, px);
            }
        }
    }
    Ok(())
}

/// Two streamed passes producing one [`MatchedFilter`] per bucket; `bucket`
/// returns `None` for pixels that should not contribute.
fn bucket_filters<S: ByteSource>(
    cube: &HyperCube<S>,
    t: &TargetSignature,
    buckets: usize,
    eps_scale: f64,
    bucket: impl Fn(usize, usize) -> Option<usize>,
    keep: impl Fn(usize, usize) -> bool,
) -> Result<(Vec<Option<MatchedFilter>>, Vec<usize>)> {
    let dim = cube.bands();
    let mut means: Vec<MeanAccumulator> = (0..buckets).map(|_| MeanAccumulator::new(dim)).collect();
    for_each_pixel(cube, |r, c, px| {
        if let (Some(px), Some(b)) = (px, bucket(r, c)) {
            means[b].push(px);
        }
    })?;
    let counts: Vec<usize> = means.iter().map(|m| m.count()).collect();
    let mut scatters: Vec<Option<ScatterAccumulator>> = means
        .iter()
        .enumerate()
        .map(|(b, m)| keep(b, m.count()).then(|| ScatterAccumulator::new(m.mean())))
        .collect();
    for_each_pixel(cube, |r, c, px| {
        if let (Some(px), Some(b)) = (px, bucket(r, c)) {
            if let Some(s) = scatters[b].as_mut() {
                s.push(px);
            }
        }
    })?;
    let mut filters = Vec::with_capacity(buckets);
    for s in scatters {
        filters.push(match s {
            Some(s) => Some(s.into_background(eps_scale)?.matched_filter(&t.values)?),
            None => None,
        });
    }
    Ok((filters, counts))
}

fn score_map<S: ByteSource>(
    cube: &HyperCube<S>,
    filter_of: impl Fn(usize, usize) -> Option<usize>,
    filters: &[&MatchedFilter],
) -> Result<EnhancementMap> {
    let mut out = MaskedGrid::new_invalid(cube.height(), cube.width());
    for_each_pixel(cube, |r, c, px| {
        if let (Some(px), Some(f)) = (px, filter_of(r, c)) {
            out.set(r, c, filters[f].score(px));
        }
    })?;
    Ok(EnhancementMap(out))
}

/// Baseline matched filter: background mean and covariance are estimated
/// over every valid pixel in each block of `column_window` adjacent image
/// columns, and each pixel is scored against its own block.
pub fn matched_filter_traditional<S: ByteSource>(
    cube: &HyperCube<S>,
    t: &TargetSignature,
    column_window: usize,
    eps_scale: f64,
) -> Result<EnhancementMap> {
    if column_window == 0 {
        return Err(Error::InvalidParameter("column window must be at least 1".into()));
    }
    check_target(cube, t)?;
    let windows = cube.width().div_ceil(column_window);
    let (filters, counts) = bucket_filters(
        cube,
        t,
        windows,
        eps_scale,
        |_, c| Some(c / column_window),
        |_, n| n >= 2,
    )?;
    if let Some(w) = counts.iter().position(|&n| n < 2) {
        return Err(Error::DegenerateWindow {
            col0: w * column_window,
            count: counts[w],
        });
    }
    let filters: Vec<&MatchedFilter> = filters.iter().map(|f| f.as_ref().unwrap()).collect();
    score_map(cube, |_, c| Some(c / column_window), &filters)
}

/// Sensor-window id per pixel, taken from the lookup table's sensor column.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorGrouping {
    pub rows: usize,
    pub cols: usize,
    pub window: usize,
    /// `None` for pixels with no sensor mapping.
    pub ids: Vec<Option<u32>>,
    pub num_windows: usize,
}

impl SensorGrouping {
    #[inline]
    pub fn id(&self, row: usize, col: usize) -> Option<usize> {
        self.ids[row * self.cols + col].map(|v| v as usize)
    }
}

/// Groups pixels by `floor((orig_col - 1) / window)`.
pub fn sensor_groups(glt: &GltMap, window: usize) -> Result<SensorGrouping> {
    if !(1..=MAX_SENSOR_WINDOW).contains(&window) {
        return Err(Error::InvalidParameter(format!(
            "sensor window {window} outside 1..={MAX_SENSOR_WINDOW}"
        )));
    }
    let ids: Vec<Option<u32>> = glt
        .orig_col
        .iter()
        .map(|&c| (c > 0).then(|| (c - 1) / window as u32))
        .collect();
    let num_windows = ids.iter().flatten().max().map_or(0, |m| *m as usize + 1);
    Ok(SensorGrouping {
        rows: glt.rows,
        cols: glt.cols,
        window,
        ids,
        num_windows,
    })
}

/// Smallest (class, sensor window) population that gets its own statistics.
pub fn min_cell_samples(bands: usize) -> usize {
    (2 * bands).max(1000)
}

/// Spectral linear filter with the default cell floor from
/// [`min_cell_samples`].
pub fn slf_enhance<S: ByteSource>(
    cube: &HyperCube<S>,
    cm: &ClassMap,
    stats: &ClassStats,
    t: &TargetSignature,
    grouping: Option<&SensorGrouping>,
) -> Result<EnhancementMap> {
    slf_enhance_with(cube, cm, stats, t, grouping, min_cell_samples(cube.bands()))
}

/// Spectral linear filter: each pixel is scored against the statistics of
/// its land-cover class. With a grouping, every (class, sensor window) cell
/// holding at least `min_cell` valid pixels gets its own mean and covariance;
/// smaller cells and unmapped pixels use the class statistics.
pub fn slf_enhance_with<S: ByteSource>(
    cube: &HyperCube<S>,
    cm: &ClassMap,
    stats: &ClassStats,
    t: &TargetSignature,
    grouping: Option<&SensorGrouping>,
    min_cell: usize,
) -> Result<EnhancementMap> {
    check_target(cube, t)?;
    if (cm.rows, cm.cols) != (cube.height(), cube.width()) {
        return Err(Error::DimensionMismatch(format!(
            "class map {}x{} vs cube {}x{}",
            cm.rows,
            cm.cols,
            cube.height(),
            cube.width()
        )));
    }
    let k = cm.num_classes();
    if stats.classes.len() < k {
        return Err(Error::MissingClassStats(stats.classes.len()));
    }
    for (class, s) in stats.classes.iter().enumerate().take(k) {
        if s.count() < 2 {
            return Err(Error::DegenerateClass {
                class,
                count: s.count(),
            });
        }
    }
    let mut filters: Vec<MatchedFilter> = stats.classes[..k]
        .iter()
        .map(|s| s.background.matched_filter(&t.values))
        .collect::<Result<_>>()?;

    let Some(g) = grouping else {
        let refs: Vec<&MatchedFilter> = filters.iter().collect();
        return score_map(cube, |r, c| cm.label(r, c), &refs);
    };
    if (g.rows, g.cols) != (cube.height(), cube.width()) {
        return Err(Error::DimensionMismatch(format!(
            "sensor grouping {}x{} vs cube {}x{}",
            g.rows,
            g.cols,
            cube.height(),
            cube.width()
        )));
    }
    let nw = g.num_windows;
    let cell = |r: usize, c: usize| Some(cm.label(r, c)? * nw + g.id(r, c)?);
    let (cells, _) = bucket_filters(cube, t, k * nw, stats.eps_scale, cell, |_, n| {
        n >= min_cell.max(2)
    })?;
    // filter index: classes first, then cells that earned their own stats
    let mut slot = vec![usize::MAX; k * nw];
    for (i, f) in cells.into_iter().enumerate() {
        if let Some(f) = f {
            slot[i] = filters.len();
            filters.push(f);
        }
    }
    let refs: Vec<&MatchedFilter> = filters.iter().collect();
    score_map(
        cube,
        |r, c| {
            let class = cm.label(r, c)?;
            match cell(r, c).map(|i| slot[i]) {
                Some(s) if s != usize::MAX => Some(s),
                _ => Some(class),
            }
        },
        &refs,
    )
}

/// Methane-to-ground ratio `|alpha.t|^2 / (alpha^T Cov alpha)`.
pub fn mgr(alpha: &[f64], t: &[f64], cov: &Matrix) -> Result<f64> {
    if alpha.len() != t.len() || cov.rows != alpha.len() || cov.cols != alpha.len() {
        return Err(Error::DimensionMismatch(format!(
            "alpha {}, target {}, covariance {}x{}",
            alpha.len(),
            t.len(),
            cov.rows,
            cov.cols
        )));
    }
    let denom = dot(alpha, &cov.mul_vec(alpha));
    if !(denom > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    let num = dot(alpha, t);
    Ok(num * num / denom)
}
