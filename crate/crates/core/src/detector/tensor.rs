use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;

/// Height x width x channel feature map, channel-fastest.
///
/// The layout matches a token matrix with one row per pixel, so
/// [`Tensor::into_tokens`] and [`Tensor::from_tokens`] are free.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    pub fn from_vec(h: usize, w: usize, c: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), h * w * c, "tensor data length");
        Self { h, w, c, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.c)
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, ch: usize) -> f64 {
        self.data[(y * self.w + x) * self.c + ch]
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let i = (y * self.w + x) * self.c;
        &self.data[i..i + self.c]
    }

    #[inline]
    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let i = (y * self.w + x) * self.c;
        &mut self.data[i..i + self.c]
    }

    pub fn tokens(&self) -> Matrix {
        Matrix::from_vec(self.h * self.w, self.c, self.data.clone())
    }

    pub fn into_tokens(self) -> Matrix {
        Matrix::from_vec(self.h * self.w, self.c, self.data)
    }

    pub fn from_tokens(h: usize, w: usize, m: Matrix) -> Self {
        assert_eq!(m.rows, h * w, "token count");
        Self {
            h,
            w,
            c: m.cols,
            data: m.data,
        }
    }

    /// Channel concatenation of two maps with equal spatial size.
    pub fn concat(&self, other: &Tensor) -> Tensor {
        assert_eq!((self.h, self.w), (other.h, other.w), "concat spatial size");
        let mut out = Vec::with_capacity(self.h * self.w * (self.c + other.c));
        for (a, b) in self.data.chunks(self.c.max(1)).zip(other.data.chunks(other.c.max(1))) {
            out.extend_from_slice(&a[..self.c]);
            out.extend_from_slice(&b[..other.c]);
        }
        Tensor::from_vec(self.h, self.w, self.c + other.c, out)
    }

    /// Nearest-neighbour enlargement by an integer factor.
    pub fn upsample(&self, factor: usize) -> Tensor {
        let (h, w) = (self.h * factor, self.w * factor);
        let mut out = Tensor::zeros(h, w, self.c);
        for y in 0..h {
            for x in 0..w {
                out.pixel_mut(y, x).copy_from_slice(self.pixel(y / factor, x / factor));
            }
        }
        out
    }

    pub fn relu(mut self) -> Tensor {
        self.data.iter_mut().for_each(|v| *v = v.max(0.0));
        self
    }

    pub fn add(mut self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "add shape");
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn add_matrices(mut a: Matrix, b: &Matrix) -> Matrix {
    assert_eq!((a.rows, a.cols), (b.rows, b.cols), "add shape");
    a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
    a
}
