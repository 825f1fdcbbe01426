//! Placement of annotation patches onto a flightline.
//!
//! A patch is a small concentration raster with geographic corners. Its
//! corners are snapped to the nearest flightline pixels, a homography is fit
//! from patch pixel coordinates to flightline pixel coordinates, and the
//! patch is resampled into the flightline by nearest neighbour. Points are
//! `(x, y)` = `(column, row)` in continuous pixel coordinates, where pixel
//! `(r, c)` covers `[c, c+1) x [r, r+1)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::hsi::GeoGrid;
use crate::linalg::{symmetric_eigen, Matrix};
use crate::math;
use crate::matchloss::{BinaryMask, PlumeClass};
use crate::{Error, Result};

pub type Point = (f64, f64);

/// Projective map with `m[8] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    pub m: [f64; 9],
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        }
    }

    /// Scales so the bottom-right entry is one.
    pub fn from_matrix(m: [f64; 9]) -> Result<Self> {
        if math::abs(m[8]) < 1e-15 || m.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateConfiguration);
        }
        let s = m[8];
        Ok(Self { m: m.map(|v| v / s) })
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6])
    }

    /// Image of a point, or `None` when it maps to infinity.
    pub fn apply(&self, p: Point) -> Option<Point> {
        let m = &self.m;
        let w = m[6] * p.0 + m[7] * p.1 + m[8];
        if math::abs(w) < 1e-300 {
            return None;
        }
        Some(((m[0] * p.0 + m[1] * p.1 + m[2]) / w, (m[3] * p.0 + m[4] * p.1 + m[5]) / w))
    }

    pub fn inverse(&self) -> Result<Homography> {
        let d = self.det();
        if !(math::abs(d) > 1e-12) {
            return Err(Error::NonInvertibleHomography);
        }
        let m = &self.m;
        let adj = [
            m[4] * m[8] - m[5] * m[7],
            m[2] * m[7] - m[1] * m[8],
            m[1] * m[5] - m[2] * m[4],
            m[5] * m[6] - m[3] * m[8],
            m[0] * m[8] - m[2] * m[6],
            m[2] * m[3] - m[0] * m[5],
            m[3] * m[7] - m[4] * m[6],
            m[1] * m[6] - m[0] * m[7],
            m[0] * m[4] - m[1] * m[3],
        ];
        Homography::from_matrix(adj.map(|v| v / d)).map_err(|_| Error::NonInvertibleHomography)
    }

    pub fn compose(&self, then: &Homography) -> Result<Homography> {
        let (a, b) = (&then.m, &self.m);
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = (0..3).map(|k| a[r * 3 + k] * b[k * 3 + c]).sum();
            }
        }
        Homography::from_matrix(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomographyFit {
    pub h: Homography,
    /// Root-mean-square reprojection error in destination pixels.
    pub rms: f64,
}

fn collinear(a: Point, b: Point, c: Point) -> bool {
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let scale = [a, b, c]
        .iter()
        .flat_map(|p| [math::abs(p.0 - a.0), math::abs(p.1 - a.1)])
        .fold(0.0, f64::max);
    math::abs(cross) <= 1e-12 * scale * scale.max(1e-300)
}

/// Similarity taking the centroid to the origin and the mean distance to
/// `sqrt(2)`.
fn normalizer(pts: &[Point]) -> [f64; 9] {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mean = pts
        .iter()
        .map(|p| math::sqrt((p.0 - cx) * (p.0 - cx) + (p.1 - cy) * (p.1 - cy)))
        .sum::<f64>()
        / n;
    let s = if mean > 0.0 { math::sqrt(2.0) / mean } else { 1.0 };
    [s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0]
}

/// Direct linear transform from `src -> dst` correspondences with
/// coordinate normalization; the solution is the eigenvector of `A^T A`
/// with the smallest eigenvalue.
pub fn estimate_homography(pairs: &[(Point, Point)]) -> Result<HomographyFit> {
    if pairs.len() < 4 {
        return Err(Error::InsufficientPairs(pairs.len()));
    }
    if pairs.iter().any(|(a, b)| ![a.0, a.1, b.0, b.1].iter().all(|v| v.is_finite())) {
        return Err(Error::DegenerateConfiguration);
    }
    let src: Vec<Point> = pairs.iter().map(|p| p.0).collect();
    let dst: Vec<Point> = pairs.iter().map(|p| p.1).collect();
    if pairs.len() == 4 {
        for pts in [&src, &dst] {
            for (i, j, k) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
                if collinear(pts[i], pts[j], pts[k]) {
                    return Err(Error::DegenerateConfiguration);
                }
            }
        }
    }
    let ts = Homography { m: normalizer(&src) };
    let td = Homography { m: normalizer(&dst) };
    let mut ata = Matrix::zeros(9, 9);
    for (s, d) in src.iter().zip(&dst) {
        let (x, y) = ts.apply(*s).expect("affine");
        let (u, v) = td.apply(*d).expect("affine");
        let rows = [
            [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u],
            [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v],
        ];
        for r in &rows {
            for i in 0..9 {
                for j in 0..9 {
                    ata.data[i * 9 + j] += r[i] * r[j];
                }
            }
        }
    }
    let (values, vectors) = symmetric_eigen(&ata)?;
    // a second near-null direction means the points do not pin down H
    if values[1] <= 1e-10 * values[8].max(1e-300) {
        return Err(Error::DegenerateConfiguration);
    }
    let mut hn = [0.0; 9];
    for (i, v) in hn.iter_mut().enumerate() {
        *v = vectors.get(i, 0);
    }
    let hn = Homography::from_matrix(hn)?;
    let h = ts.compose(&hn)?.compose(&td.inverse()?)?;
    let mut sq = 0.0;
    for (s, d) in src.iter().zip(&dst) {
        let p = h.apply(*s).ok_or(Error::DegenerateConfiguration)?;
        sq += (p.0 - d.0) * (p.0 - d.0) + (p.1 - d.1) * (p.1 - d.1);
    }
    Ok(HomographyFit {
        h,
        rms: math::sqrt(sq / pairs.len() as f64),
    })
}

/// Single-band non-negative concentration raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationLayer {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl ConcentrationLayer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {rows}x{cols}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter("concentrations must be non-negative".into()));
        }
        Ok(Self { rows, cols, values })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn support(&self) -> BinaryMask {
        BinaryMask {
            rows: self.rows,
            cols: self.cols,
            data: self.values.iter().map(|v| *v > 0.0).collect(),
        }
    }

    pub fn nonzero(&self) -> usize {
        self.values.iter().filter(|v| **v > 0.0).count()
    }
}

/// Resamples `patch` into a `rows x cols` target: each target pixel centre
/// is mapped back through `h` and takes the value of the patch pixel it
/// lands in, or zero outside the patch.
pub fn warp_mask(patch: &ConcentrationLayer, h: &Homography, rows: usize, cols: usize) -> Result<ConcentrationLayer> {
    let inv = h.inverse()?;
    let mut out = ConcentrationLayer::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let Some((u, v)) = inv.apply((c as f64 + 0.5, r as f64 + 0.5)) else {
                continue;
            };
            let (su, sv) = (math::floor(u), math::floor(v));
            if su >= 0.0 && sv >= 0.0 && su < patch.cols as f64 && sv < patch.rows as f64 {
                out.values[r * cols + c] = patch.get(sv as usize, su as usize);
            }
        }
    }
    Ok(out)
}

/// Expert annotation: a concentration patch with the geographic location of
/// its four corner pixel centres, clockwise from top-left.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationPatch {
    pub concentration: ConcentrationLayer,
    /// `(lon, lat)` of the top-left, top-right, bottom-right and
    /// bottom-left pixel centres.
    pub corners: [Point; 4],
    pub source: PlumeClass,
}

impl AnnotationPatch {
    fn corner_pixels(&self) -> [Point; 4] {
        let (w, h) = (self.concentration.cols as f64, self.concentration.rows as f64);
        [(0.5, 0.5), (w - 0.5, 0.5), (w - 0.5, h - 0.5), (0.5, h - 0.5)]
    }
}

/// Patch corner pixel centres paired with the centres of the flightline
/// pixels nearest to their geographic coordinates.
pub fn corner_correspondences(patch: &AnnotationPatch, geo: &GeoGrid) -> Result<Vec<(Point, Point)>> {
    patch
        .corner_pixels()
        .iter()
        .zip(&patch.corners)
        .map(|(src, &(lon, lat))| {
            let (r, c) = geo.nearest(lon, lat).ok_or_else(|| {
                Error::InvalidGeometry("location grid has no finite coordinates".into())
            })?;
            Ok((*src, (c as f64 + 0.5, r as f64 + 0.5)))
        })
        .collect()
}

/// Places a patch onto the flightline grid of `geo`.
pub fn map_annotation(patch: &AnnotationPatch, geo: &GeoGrid) -> Result<(ConcentrationLayer, HomographyFit)> {
    let pairs = corner_correspondences(patch, geo)?;
    let fit = estimate_homography(&pairs)?;
    let layer = warp_mask(&patch.concentration, &fit.h, geo.rows, geo.cols)?;
    Ok((layer, fit))
}

pub const POINT_SOURCE_RGB: [u8; 3] = [255, 0, 0];
pub const DIFFUSED_SOURCE_RGB: [u8; 3] = [0, 0, 255];

pub fn source_color(source: PlumeClass) -> [u8; 3] {
    match source {
        PlumeClass::PointSource => POINT_SOURCE_RGB,
        PlumeClass::DiffusedSource => DIFFUSED_SOURCE_RGB,
    }
}

/// Three-channel 8-bit mask image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbMask {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl RgbMask {
    pub fn black(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            pixels: vec![[0; 3]; rows * cols],
        }
    }

    /// Plume pixels of one source colour.
    pub fn support_of(&self, source: PlumeClass) -> BinaryMask {
        let color = source_color(source);
        BinaryMask {
            rows: self.rows,
            cols: self.cols,
            data: self.pixels.iter().map(|p| *p == color).collect(),
        }
    }
}

/// Positive pixels take the source colour; the rest are black.
pub fn encode_mask(layer: &ConcentrationLayer, source: PlumeClass) -> RgbMask {
    encode_support(&layer.support(), source)
}

pub fn encode_support(support: &BinaryMask, source: PlumeClass) -> RgbMask {
    let color = source_color(source);
    RgbMask {
        rows: support.rows,
        cols: support.cols,
        pixels: support.data.iter().map(|&s| if s { color } else { [0; 3] }).collect(),
    }
}

/// Overlays layers of equal size; a point-source pixel is never
/// overwritten by a diffused one.
pub fn composite(layers: &[(&ConcentrationLayer, PlumeClass)]) -> Result<RgbMask> {
    let Some((first, _)) = layers.first() else {
        return Ok(RgbMask::black(0, 0));
    };
    let mut out = RgbMask::black(first.rows, first.cols);
    for (layer, source) in layers {
        if (layer.rows, layer.cols) != (out.rows, out.cols) {
            return Err(Error::DimensionMismatch(format!(
                "layer {}x{} vs {}x{}",
                layer.rows, layer.cols, out.rows, out.cols
            )));
        }
        let color = source_color(*source);
        for (px, v) in out.pixels.iter_mut().zip(&layer.values) {
            if *v > 0.0 && *px != POINT_SOURCE_RGB {
                *px = color;
            }
        }
    }
    Ok(out)
}
