use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Row-major binary raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|v| *v)
    }

    fn same_size(&self, other: &BinaryMask) -> Result<()> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::DimensionMismatch(format!(
                "masks {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// Intersection-over-union; two empty masks score 0.
    pub fn iou(&self, other: &BinaryMask) -> Result<f64> {
        self.same_size(other)?;
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in self.data.iter().zip(&other.data) {
            inter += (*a && *b) as usize;
            union += (*a || *b) as usize;
        }
        Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
    }

    /// A pixel of the result is set when at least half of its
    /// `factor x factor` source block is set.
    pub fn downsample_majority(&self, rows: usize, cols: usize) -> Result<BinaryMask> {
        if rows == 0 || cols == 0 || !self.rows.is_multiple_of(rows) || !self.cols.is_multiple_of(cols) || self.rows / rows != self.cols / cols {
            return Err(Error::ResolutionMismatch(format!(
                "{}x{} mask cannot be reduced to {rows}x{cols}",
                self.rows, self.cols
            )));
        }
        let f = self.rows / rows;
        let mut out = BinaryMask::empty(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let mut n = 0;
                for y in r * f..(r + 1) * f {
                    for x in c * f..(c + 1) * f {
                        n += self.get(y, x) as usize;
                    }
                }
                out.set(r, c, 2 * n >= f * f);
            }
        }
        Ok(out)
    }

    /// 8-connected components, each as its own mask, ordered by first pixel
    /// in raster order.
    pub fn components(&self) -> Vec<BinaryMask> {
        let mut label = vec![usize::MAX; self.data.len()];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..self.data.len() {
            if !self.data[start] || label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut comp = BinaryMask::empty(self.rows, self.cols);
            label[start] = id;
            stack.push(start);
            while let Some(i) = stack.pop() {
                comp.data[i] = true;
                let (r, c) = ((i / self.cols) as isize, (i % self.cols) as isize);
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        let (nr, nc) = (r + dr, c + dc);
                        if nr < 0 || nc < 0 || nr >= self.rows as isize || nc >= self.cols as isize {
                            continue;
                        }
                        let j = nr as usize * self.cols + nc as usize;
                        if self.data[j] && label[j] == usize::MAX {
                            label[j] = id;
                            stack.push(j);
                        }
                    }
                }
            }
            out.push(comp);
        }
        out
    }
}
