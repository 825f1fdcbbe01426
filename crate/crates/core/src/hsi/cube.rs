use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use super::header::{ByteOrder, CubeMeta, DataType, RasterLayout};
use crate::{Error, Result};

/// Random-access byte storage behind a raster.
///
/// Implementations must be safe to call from several threads at once; reads
/// never mutate the source.
pub trait ByteSource {
    fn byte_len(&self) -> u64;
    fn read_at(&self, offset: u64, buf: &mut [u8]) -> Result<()>;
}

impl ByteSource for [u8] {
    fn byte_len(&self) -> u64 {
        self.len() as u64
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> Result<()> {
        let start = usize::try_from(offset).map_err(|_| Error::IoFailure("offset overflow".into()))?;
        let end = start
            .checked_add(buf.len())
            .filter(|e| *e <= self.len())
            .ok_or_else(|| {
                Error::IoFailure(format!(
                    "read of {} bytes at {} past end of {}-byte buffer",
                    buf.len(),
                    offset,
                    self.len()
                ))
            })?;
        buf.copy_from_slice(&self[start..end]);
        Ok(())
    }
}

impl ByteSource for Vec<u8> {
    fn byte_len(&self) -> u64 {
        self.as_slice().byte_len()
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> Result<()> {
        self.as_slice().read_at(offset, buf)
    }
}

impl<S: ByteSource + ?Sized> ByteSource for &S {
    fn byte_len(&self) -> u64 {
        (**self).byte_len()
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> Result<()> {
        (**self).read_at(offset, buf)
    }
}

/// Dense window of a raster in `(row, col, band)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub data: Vec<f64>,
    /// Per-sample validity; false where the sample equals the no-data value
    /// or is not finite.
    pub valid: Vec<bool>,
}

impl Block {
    #[inline]
    pub fn offset(&self, row: usize, col: usize) -> usize {
        (row * self.cols + col) * self.bands
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> f64 {
        self.data[self.offset(row, col) + band]
    }

    /// Spectrum of one pixel.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let o = self.offset(row, col);
        &self.data[o..o + self.bands]
    }

    /// A pixel is valid when every band in the block is valid.
    pub fn pixel_valid(&self, row: usize, col: usize) -> bool {
        let o = self.offset(row, col);
        self.valid[o..o + self.bands].iter().all(|v| *v)
    }
}

/// Reads windows out of any BIL raster.
#[derive(Debug, Clone)]
pub struct BilReader<S> {
    layout: RasterLayout,
    source: S,
}

impl<S: ByteSource> BilReader<S> {
    pub fn new(layout: RasterLayout, source: S) -> Result<Self> {
        let need = layout.header_offset + layout.data_bytes();
        if source.byte_len() < need {
            return Err(Error::IoFailure(format!(
                "raster needs {need} bytes but source holds {}",
                source.byte_len()
            )));
        }
        Ok(Self { layout, source })
    }

    pub fn layout(&self) -> &RasterLayout {
        &self.layout
    }

    pub fn source(&self) -> &S {
        &self.source
    }

    pub fn read_block(
        &self,
        rows: Range<usize>,
        cols: Range<usize>,
        bands: Range<usize>,
    ) -> Result<Block> {
        let l = &self.layout;
        for (name, r, limit) in [
            ("rows", &rows, l.height),
            ("cols", &cols, l.width),
            ("bands", &bands, l.bands),
        ] {
            if r.start > r.end || r.end > limit {
                return Err(Error::OutOfBounds(format!(
                    "{name} {}..{} outside 0..{limit}",
                    r.start, r.end
                )));
            }
        }
        let (nr, nc, nb) = (rows.len(), cols.len(), bands.len());
        let size = l.data_type.size();
        let mut data = vec![0.0; nr * nc * nb];
        let mut valid = vec![true; nr * nc * nb];
        let mut line = vec![0u8; nc * size];
        for (ri, r) in rows.clone().enumerate() {
            for (bi, b) in bands.clone().enumerate() {
                let sample = ((r * l.bands + b) * l.width + cols.start) as u64;
                self.source
                    .read_at(l.header_offset + sample * size as u64, &mut line)?;
                for ci in 0..nc {
                    let v = decode(&line[ci * size..(ci + 1) * size], l.data_type, l.byte_order);
                    let idx = (ri * nc + ci) * nb + bi;
                    data[idx] = v;
                    valid[idx] = v.is_finite() && l.no_data != Some(v);
                }
            }
        }
        Ok(Block {
            rows: nr,
            cols: nc,
            bands: nb,
            data,
            valid,
        })
    }

    pub fn read_sample(&self, row: usize, col: usize, band: usize) -> Result<f64> {
        let b = self.read_block(row..row + 1, col..col + 1, band..band + 1)?;
        Ok(b.data[0])
    }
}

fn decode(bytes: &[u8], ty: DataType, order: ByteOrder) -> f64 {
    macro_rules! conv {
        ($t:ty, $n:expr) => {{
            let mut a = [0u8; $n];
            a.copy_from_slice(bytes);
            match order {
                ByteOrder::Little => <$t>::from_le_bytes(a) as f64,
                ByteOrder::Big => <$t>::from_be_bytes(a) as f64,
            }
        }};
    }
    match ty {
        DataType::Int16 => conv!(i16, 2),
        DataType::Int32 => conv!(i32, 4),
        DataType::Float32 => conv!(f32, 4),
        DataType::Float64 => conv!(f64, 8),
    }
}

/// Encodes samples given in `(row, col, band)` order as little-endian BIL.
pub fn encode_bil(layout: &RasterLayout, samples: &[f64]) -> Result<Vec<u8>> {
    let (h, w, n) = (layout.height, layout.width, layout.bands);
    if samples.len() != h * w * n {
        return Err(Error::DimensionMismatch(format!(
            "{} samples for a {h}x{w}x{n} raster",
            samples.len()
        )));
    }
    let mut out = Vec::with_capacity(h * w * n * layout.data_type.size());
    for r in 0..h {
        for b in 0..n {
            for c in 0..w {
                let v = samples[(r * w + c) * n + b];
                match layout.data_type {
                    DataType::Int16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
                    DataType::Int32 => out.extend_from_slice(&(v as i32).to_le_bytes()),
                    DataType::Float32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                    DataType::Float64 => out.extend_from_slice(&v.to_le_bytes()),
                }
            }
        }
    }
    Ok(out)
}

/// Radiance cube: wavelength-aware metadata over a BIL reader.
#[derive(Debug, Clone)]
pub struct HyperCube<S> {
    meta: CubeMeta,
    reader: BilReader<S>,
}

impl<S: ByteSource> HyperCube<S> {
    pub fn new(meta: CubeMeta, source: S) -> Result<Self> {
        meta.validate()?;
        let reader = BilReader::new(meta.layout.clone(), source)?;
        Ok(Self { meta, reader })
    }

    pub fn meta(&self) -> &CubeMeta {
        &self.meta
    }

    pub fn height(&self) -> usize {
        self.meta.height()
    }

    pub fn width(&self) -> usize {
        self.meta.width()
    }

    pub fn bands(&self) -> usize {
        self.meta.bands()
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.meta.wavelengths
    }

    pub fn read_block(
        &self,
        rows: Range<usize>,
        cols: Range<usize>,
        bands: Range<usize>,
    ) -> Result<Block> {
        self.reader.read_block(rows, cols, bands)
    }

    /// All bands of a strip of full-width rows.
    pub fn read_rows(&self, rows: Range<usize>) -> Result<Block> {
        self.read_block(rows, 0..self.width(), 0..self.bands())
    }

    pub fn read_sample(&self, row: usize, col: usize, band: usize) -> Result<f64> {
        self.reader.read_sample(row, col, band)
    }

    /// Row strips of at most `strip` rows covering the cube top to bottom.
    pub fn strips(&self, strip: usize) -> impl Iterator<Item = Range<usize>> {
        let h = self.height();
        let step = strip.max(1);
        (0..h).step_by(step).map(move |r| r..(r + step).min(h))
    }
}

impl HyperCube<Vec<u8>> {
    /// In-memory cube from `(row, col, band)` ordered samples, stored as
    /// float64 BIL.
    pub fn from_samples(meta: CubeMeta, samples: &[f64]) -> Result<Self> {
        let mut meta = meta;
        meta.layout.data_type = DataType::Float64;
        meta.layout.byte_order = ByteOrder::Little;
        meta.layout.header_offset = 0;
        let bytes = encode_bil(&meta.layout, samples)?;
        Self::new(meta, bytes)
    }
}

/// Row strip height used when streaming over a cube.
pub(crate) const STRIP_ROWS: usize = 64;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hsi::header::DEFAULT_NO_DATA;

    fn cube(h: usize, w: usize, n: usize, ty: DataType) -> (HyperCube<Vec<u8>>, Vec<f64>) {
        let waves = (0..n).map(|b| 400.0 + 10.0 * b as f64).collect();
        let mut meta = CubeMeta::new(h, w, waves, ty).unwrap();
        meta.layout.data_type = ty;
        let samples: Vec<f64> = (0..h * w * n).map(|i| (i % 251) as f64 - 17.0).collect();
        let bytes = encode_bil(&meta.layout, &samples).unwrap();
        (HyperCube::new(meta, bytes).unwrap(), samples)
    }

    #[test]
    fn two_by_two_window_round_trips() {
        let (c, s) = cube(5, 4, 3, DataType::Float32);
        let b = c.read_block(1..3, 2..4, 1..2).unwrap();
        assert_eq!((b.rows, b.cols, b.bands), (2, 2, 1));
        for r in 0..2 {
            for col in 0..2 {
                let expect = s[((r + 1) * 4 + col + 2) * 3 + 1];
                assert_eq!(b.get(r, col, 0), expect);
            }
        }
    }

    #[test]
    fn halves_concatenate_to_full() {
        for ty in [DataType::Int16, DataType::Int32, DataType::Float32, DataType::Float64] {
            let (c, _) = cube(6, 5, 4, ty);
            let full = c.read_rows(0..6).unwrap();
            let top = c.read_rows(0..3).unwrap();
            let bottom = c.read_rows(3..6).unwrap();
            let mut joined = top.data.clone();
            joined.extend_from_slice(&bottom.data);
            assert_eq!(full.data, joined);
        }
    }

    #[test]
    fn per_sample_reads_match_block() {
        let (c, _) = cube(3, 4, 5, DataType::Float64);
        let block = c.read_rows(0..3).unwrap();
        for r in 0..3 {
            for col in 0..4 {
                for b in 0..5 {
                    let v = c.read_sample(r, col, b).unwrap();
                    assert_eq!(v.to_bits(), block.get(r, col, b).to_bits());
                }
            }
        }
    }

    #[test]
    fn no_data_sentinel_flagged() {
        let waves = alloc::vec![500.0, 600.0];
        let meta = CubeMeta::new(2, 2, waves, DataType::Float32).unwrap();
        let mut samples = alloc::vec![1.0; 8];
        samples[(2 + 1) * 2 + 1] = DEFAULT_NO_DATA; // row 1, col 1, band 1
        let c = HyperCube::from_samples(meta, &samples).unwrap();
        let b = c.read_rows(0..2).unwrap();
        assert!(!b.valid[7]);
        assert_eq!(b.valid.iter().filter(|v| !**v).count(), 1);
        assert!(!b.pixel_valid(1, 1));
        assert!(b.pixel_valid(1, 0));
    }

    #[test]
    fn out_of_bounds() {
        let (c, _) = cube(3, 3, 2, DataType::Float32);
        assert!(matches!(c.read_block(0..4, 0..1, 0..1), Err(Error::OutOfBounds(_))));
        assert!(matches!(c.read_block(0..1, 0..1, 1..3), Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn short_source_is_io_failure() {
        let meta = CubeMeta::new(2, 2, alloc::vec![500.0], DataType::Float32).unwrap();
        assert!(matches!(
            HyperCube::new(meta, alloc::vec![0u8; 3]),
            Err(Error::IoFailure(_))
        ));
    }

    #[test]
    fn big_endian_decodes() {
        let mut layout = RasterLayout::new(1, 2, 1, DataType::Int16);
        layout.byte_order = ByteOrder::Big;
        let bytes = alloc::vec![0x01, 0x02, 0xff, 0xfe];
        let r = BilReader::new(layout, bytes).unwrap();
        let b = r.read_block(0..1, 0..2, 0..1).unwrap();
        assert_eq!(b.data, [258.0, -2.0]);
    }
}
