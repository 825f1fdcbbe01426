//! Land-cover classes from NDVI/NDWI and per-class background statistics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::hsi::{ByteSource, HyperCube, STRIP_ROWS};
use crate::linalg::Matrix;
use crate::math;
use crate::spectra::IndexMap;
use crate::stats::{Background, MeanAccumulator, ScatterAccumulator};
use crate::{Error, Result};

/// Number of uniform NDVI bins over `[-1, 1]`.
pub const NDVI_BINS: usize = 20;
/// Label of the water override class produced by [`classify`].
pub const WATER_CLASS: u16 = NDVI_BINS as u16;
pub const DEFAULT_WATER_THRESHOLD: f64 = 0.3;
pub const DEFAULT_MIN_PIXELS: usize = 10_000;
pub const DEFAULT_EPS_SCALE: f64 = 1e-6;
pub const UNLABELED: u16 = u16::MAX;

/// Per-pixel land-cover labels.
///
/// Classes are ordered by adjacency: `order[0]` neighbours `order[1]`, and
/// so on. After [`merge_small_classes`] the order is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMap {
    pub rows: usize,
    pub cols: usize,
    /// `UNLABELED` for invalid pixels.
    pub labels: Vec<u16>,
    pub counts: Vec<usize>,
    pub order: Vec<u16>,
    /// Source classification bins folded into each class.
    pub members: Vec<Vec<u16>>,
}

impl ClassMap {
    /// Map with `k` classes in identity adjacency order.
    pub fn from_labels(rows: usize, cols: usize, labels: Vec<u16>, k: usize) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {rows}x{cols}",
                labels.len()
            )));
        }
        let mut counts = vec![0; k];
        for &l in &labels {
            if l != UNLABELED {
                let slot = counts.get_mut(l as usize).ok_or_else(|| {
                    Error::InvalidParameter(format!("label {l} outside 0..{k}"))
                })?;
                *slot += 1;
            }
        }
        Ok(Self {
            rows,
            cols,
            labels,
            counts,
            order: (0..k as u16).collect(),
            members: (0..k as u16).map(|c| vec![c]).collect(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    #[inline]
    pub fn label(&self, row: usize, col: usize) -> Option<usize> {
        let l = self.labels[row * self.cols + col];
        (l != UNLABELED).then_some(l as usize)
    }

    pub fn valid_count(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Uniform NDVI bin of a value, clamped to `0..NDVI_BINS`.
pub fn ndvi_bin(ndvi: f64) -> u16 {
    let b = math::floor((ndvi + 1.0) * 10.0);
    b.clamp(0.0, (NDVI_BINS - 1) as f64) as u16
}

/// Labels each pixel by its NDVI bin, overriding to [`WATER_CLASS`] where
/// NDWI exceeds `water_threshold`. Pixels where either index is invalid stay
/// unlabeled. Adjacency order puts water next to the lowest NDVI bin.
pub fn classify(ndvi: &IndexMap, ndwi: &IndexMap, water_threshold: f64) -> Result<ClassMap> {
    if (ndvi.rows, ndvi.cols) != (ndwi.rows, ndwi.cols) {
        return Err(Error::DimensionMismatch(format!(
            "ndvi {}x{} vs ndwi {}x{}",
            ndvi.rows, ndvi.cols, ndwi.rows, ndwi.cols
        )));
    }
    let n = ndvi.rows * ndvi.cols;
    let mut labels = vec![UNLABELED; n];
    for (i, label) in labels.iter_mut().enumerate() {
        if !(ndvi.valid[i] && ndwi.valid[i]) {
            continue;
        }
        *label = if ndwi.values[i] > water_threshold {
            WATER_CLASS
        } else {
            ndvi_bin(ndvi.values[i])
        };
    }
    let mut map = ClassMap::from_labels(ndvi.rows, ndvi.cols, labels, NDVI_BINS + 1)?;
    map.order = core::iter::once(WATER_CLASS)
        .chain(0..NDVI_BINS as u16)
        .collect();
    Ok(map)
}

/// Folds undersized classes into adjacent ones until every class holds at
/// least `min_pixels` pixels or one class remains, then relabels densely in
/// adjacency order.
///
/// Each step takes the smallest class below the floor (first in adjacency
/// order on ties) and merges it into its smaller neighbour (left on ties).
pub fn merge_small_classes(cm: &ClassMap, min_pixels: usize) -> ClassMap {
    struct Group {
        classes: Vec<u16>,
        count: usize,
    }
    let mut groups: Vec<Group> = cm
        .order
        .iter()
        .map(|&c| Group {
            classes: vec![c],
            count: cm.counts[c as usize],
        })
        .collect();
    while groups.len() > 1 {
        let Some(victim) = groups
            .iter()
            .enumerate()
            .filter(|(_, g)| g.count < min_pixels)
            .min_by_key(|(i, g)| (g.count, *i))
            .map(|(i, _)| i)
        else {
            break;
        };
        let target = match (victim.checked_sub(1), (victim + 1 < groups.len()).then_some(victim + 1)) {
            (Some(l), Some(r)) => {
                if groups[r].count < groups[l].count {
                    r
                } else {
                    l
                }
            }
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => unreachable!("more than one group"),
        };
        let g = groups.remove(victim);
        let target = if target > victim { target - 1 } else { target };
        groups[target].count += g.count;
        groups[target].classes.extend(g.classes);
    }

    let mut relabel = vec![UNLABELED; cm.num_classes()];
    for (new, g) in groups.iter().enumerate() {
        for &c in &g.classes {
            relabel[c as usize] = new as u16;
        }
    }
    let labels = cm
        .labels
        .iter()
        .map(|&l| if l == UNLABELED { UNLABELED } else { relabel[l as usize] })
        .collect();
    let members = groups
        .iter()
        .map(|g| {
            let mut m: Vec<u16> = g
                .classes
                .iter()
                .flat_map(|&c| cm.members[c as usize].iter().copied())
                .collect();
            m.sort_unstable();
            m
        })
        .collect();
    ClassMap {
        rows: cm.rows,
        cols: cm.cols,
        labels,
        counts: groups.iter().map(|g| g.count).collect(),
        order: (0..groups.len() as u16).collect(),
        members,
    }
}

/// Mean, covariance and regularized inverse for one class.
#[derive(Debug, Clone)]
pub struct ClassStat {
    pub background: Background,
    pub inverse: Matrix,
}

impl ClassStat {
    pub fn mean(&self) -> &[f64] {
        &self.background.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.background.cov
    }

    pub fn count(&self) -> usize {
        self.background.count
    }
}

#[derive(Debug, Clone)]
pub struct ClassStats {
    pub classes: Vec<ClassStat>,
    pub eps_scale: f64,
}

/// Per-class mean and covariance (population form, divides by N) over all
/// valid pixels of each class, streamed in row strips. Pixels are visited in
/// raster order.
pub fn class_stats<S: ByteSource>(cube: &HyperCube<S>, cm: &ClassMap, eps_scale: f64) -> Result<ClassStats> {
    if (cm.rows, cm.cols) != (cube.height(), cube.width()) {
        return Err(Error::DimensionMismatch(format!(
            "class map {}x{} vs cube {}x{}",
            cm.rows,
            cm.cols,
            cube.height(),
            cube.width()
        )));
    }
    for (class, &count) in cm.counts.iter().enumerate() {
        if count < 2 {
            return Err(Error::DegenerateClass { class, count });
        }
    }
    let k = cm.num_classes();
    let dim = cube.bands();
    let mut means: Vec<MeanAccumulator> = (0..k).map(|_| MeanAccumulator::new(dim)).collect();
    for_each_labeled_pixel(cube, cm, |class, px| means[class].push(px))?;
    let mut scatters: Vec<ScatterAccumulator> =
        means.iter().map(|m| ScatterAccumulator::new(m.mean())).collect();
    for_each_labeled_pixel(cube, cm, |class, px| scatters[class].push(px))?;

    let mut classes = Vec::with_capacity(k);
    for (class, s) in scatters.into_iter().enumerate() {
        if s.count() < 2 {
            return Err(Error::DegenerateClass {
                class,
                count: s.count(),
            });
        }
        let background = s.into_background(eps_scale)?;
        let inverse = background.regularized_inverse();
        classes.push(ClassStat { background, inverse });
    }
    Ok(ClassStats { classes, eps_scale })
}

/// Visits every labeled pixel with a fully valid spectrum in raster order.
pub(crate) fn for_each_labeled_pixel<S: ByteSource>(
    cube: &HyperCube<S>,
    cm: &ClassMap,
    mut f: impl FnMut(usize, &[f64]),
) -> Result<()> {
    for rows in cube.strips(STRIP_ROWS) {
        let row0 = rows.start;
        let block = cube.read_rows(rows)?;
        for r in 0..block.rows {
            for c in 0..block.cols {
                if let Some(class) = cm.label(row0 + r, c) {
                    if block.pixel_valid(r, c) {
                        f(class, block.pixel(r, c));
                    }
                }
            }
        }
    }
    Ok(())
}
