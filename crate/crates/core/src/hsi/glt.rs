use alloc::format;
use alloc::vec::Vec;

use super::cube::{BilReader, ByteSource};
use crate::{Error, Result};

/// Geometric lookup table: for each orthorectified pixel, the raw sensor
/// `(row, col)` it was resampled from. Index 0 marks an unmapped pixel, so
/// valid sensor columns run from 1 to the detector width.
#[derive(Debug, Clone, PartialEq)]
pub struct GltMap {
    pub rows: usize,
    pub cols: usize,
    pub orig_row: Vec<u32>,
    pub orig_col: Vec<u32>,
}

impl GltMap {
    pub fn new(rows: usize, cols: usize, orig_row: Vec<u32>, orig_col: Vec<u32>) -> Result<Self> {
        if orig_row.len() != rows * cols || orig_col.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "GLT arrays of {} and {} entries for {rows}x{cols}",
                orig_row.len(),
                orig_col.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            orig_row,
            orig_col,
        })
    }

    /// Reads a 2-band integer raster with band 0 = sensor column and
    /// band 1 = sensor row.
    pub fn read<S: ByteSource>(reader: &BilReader<S>) -> Result<Self> {
        let l = reader.layout();
        if l.bands < 2 {
            return Err(Error::BadGeometry(format!("GLT needs 2 bands, found {}", l.bands)));
        }
        let block = reader.read_block(0..l.height, 0..l.width, 0..2)?;
        let n = l.height * l.width;
        let mut orig_col = Vec::with_capacity(n);
        let mut orig_row = Vec::with_capacity(n);
        for i in 0..n {
            // Negative entries mark nearest-neighbour fill; the magnitude
            // still names the sensor sample.
            orig_col.push(block.data[i * 2].abs() as u32);
            orig_row.push(block.data[i * 2 + 1].abs() as u32);
        }
        Self::new(l.height, l.width, orig_row, orig_col)
    }

    /// Sensor column (1-based) of a pixel, `None` when unmapped.
    pub fn sensor_col(&self, row: usize, col: usize) -> Option<u32> {
        let v = self.orig_col[row * self.cols + col];
        (v > 0).then_some(v)
    }
}

/// Per-pixel geographic coordinates of a flightline.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoGrid {
    pub rows: usize,
    pub cols: usize,
    pub lon: Vec<f64>,
    pub lat: Vec<f64>,
}

impl GeoGrid {
    /// Reads band 0 as longitude and band 1 as latitude.
    pub fn read<S: ByteSource>(reader: &BilReader<S>) -> Result<Self> {
        let l = reader.layout();
        if l.bands < 2 {
            return Err(Error::BadGeometry(format!(
                "location grid needs 2 bands, found {}",
                l.bands
            )));
        }
        let block = reader.read_block(0..l.height, 0..l.width, 0..2)?;
        let n = l.height * l.width;
        let lon = (0..n).map(|i| block.data[i * 2]).collect();
        let lat = (0..n).map(|i| block.data[i * 2 + 1]).collect();
        Ok(Self {
            rows: l.height,
            cols: l.width,
            lon,
            lat,
        })
    }

    /// Grid pixel `(row, col)` whose coordinates are closest to the query.
    /// Ties resolve to the first pixel in raster order.
    pub fn nearest(&self, lon: f64, lat: f64) -> Option<(usize, usize)> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.lon.len() {
            let (x, y) = (self.lon[i], self.lat[i]);
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            let d = (x - lon) * (x - lon) + (y - lat) * (y - lat);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| (i / self.cols, i % self.cols))
    }
}
