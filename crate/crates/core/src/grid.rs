use alloc::vec;
use alloc::vec::Vec;

/// Row-major 2-D field of `f64` with a per-cell validity flag.
///
/// Invalid cells carry `NaN` in `values` so that accidental use shows up
/// quickly, but code should always consult `valid`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedGrid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl MaskedGrid {
    pub fn new_invalid(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![f64::NAN; rows * cols],
            valid: vec![false; rows * cols],
        }
    }

    /// Every cell valid.
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), rows * cols);
        Self {
            rows,
            cols,
            valid: vec![true; values.len()],
            values,
        }
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = self.index(row, col);
        self.valid[i].then_some(self.values[i])
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let i = self.index(row, col);
        self.values[i] = value;
        self.valid[i] = true;
    }

    pub fn invalidate(&mut self, row: usize, col: usize) {
        let i = self.index(row, col);
        self.values[i] = f64::NAN;
        self.valid[i] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Iterator over `(index, value)` for valid cells.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter_map(|(i, (v, ok))| ok.then_some((i, *v)))
    }

    /// Copy of the `rows x cols` window starting at `(row0, col0)`.
    pub fn window(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> MaskedGrid {
        let mut out = MaskedGrid::new_invalid(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let src = self.index(row0 + r, col0 + c);
                let dst = r * cols + c;
                out.values[dst] = self.values[src];
                out.valid[dst] = self.valid[src];
            }
        }
        out
    }
}
