use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Square tile of an image, origin at `(row0, col0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TileRect {
    pub row0: usize,
    pub col0: usize,
    pub size: usize,
}

impl TileRect {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row0 && row < self.row0 + self.size && col >= self.col0 && col < self.col0 + self.size
    }
}

fn axis_origins(len: usize, size: usize, stride: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut o = 0;
    loop {
        if o + size >= len {
            // Clamp the last tile so it ends on the image edge.
            let last = len - size;
            if out.last() != Some(&last) {
                out.push(last);
            }
            break;
        }
        out.push(o);
        o += stride;
    }
    out
}

/// Plans square tiles on a stride of `size - overlap`; the last tile along
/// each axis is shifted inward to end on the image edge. Tiles come out in
/// row-major order of their origins.
pub fn plan_tiles(height: usize, width: usize, size: usize, overlap: usize) -> Result<Vec<TileRect>> {
    if size == 0 || overlap >= size {
        return Err(Error::InvalidGeometry(format!(
            "overlap {overlap} must be smaller than tile size {size}"
        )));
    }
    if size > height || size > width {
        return Err(Error::InvalidGeometry(format!(
            "tile size {size} exceeds image {height}x{width}"
        )));
    }
    let stride = size - overlap;
    let rows = axis_origins(height, size, stride);
    let cols = axis_origins(width, size, stride);
    Ok(rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| TileRect { row0: r, col0: c, size }))
        .collect())
}
