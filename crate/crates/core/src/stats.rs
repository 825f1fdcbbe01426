//! Background mean/covariance estimation and the whitened matched filter
//! built from it.
//!
//! Statistics are accumulated in two passes (mean, then centred scatter) in
//! the order pixels are fed, so two callers that feed the same pixels in the
//! same order get bit-identical results.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{dot, Cholesky, Matrix};
use crate::math;
use crate::{Error, Result};

/// Running sum for the first pass.
#[derive(Debug, Clone)]
pub struct MeanAccumulator {
    count: usize,
    sum: Vec<f64>,
}

impl MeanAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            sum: vec![0.0; dim],
        }
    }

    #[inline]
    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        for (s, v) in self.sum.iter_mut().zip(x) {
            *s += v;
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.sum.iter().map(|s| s / n).collect()
    }
}

/// Centred outer-product sum for the second pass. Only the upper triangle
/// is stored.
#[derive(Debug, Clone)]
pub struct ScatterAccumulator {
    mean: Vec<f64>,
    count: usize,
    upper: Vec<f64>,
    centred: Vec<f64>,
}

impl ScatterAccumulator {
    pub fn new(mean: Vec<f64>) -> Self {
        let n = mean.len();
        Self {
            count: 0,
            upper: vec![0.0; n * (n + 1) / 2],
            centred: vec![0.0; n],
            mean,
        }
    }

    #[inline]
    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        for ((c, v), m) in self.centred.iter_mut().zip(x).zip(&self.mean) {
            *c = v - m;
        }
        let n = self.mean.len();
        let mut k = 0;
        for i in 0..n {
            let ci = self.centred[i];
            let row = &mut self.upper[k..k + n - i];
            for (dst, cj) in row.iter_mut().zip(&self.centred[i..]) {
                *dst += ci * cj;
            }
            k += n - i;
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Population covariance (divides by N).
    pub fn covariance(&self) -> Matrix {
        let n = self.mean.len();
        let inv = 1.0 / self.count.max(1) as f64;
        let mut cov = Matrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                let v = self.upper[k] * inv;
                cov.set(i, j, v);
                cov.set(j, i, v);
                k += 1;
            }
        }
        cov
    }

    pub fn into_background(self, eps_scale: f64) -> Result<Background> {
        let cov = self.covariance();
        Background::new(self.mean, cov, self.count, eps_scale)
    }
}

/// Mean and covariance of one background population, with the regularized
/// factorization used for whitening.
#[derive(Debug, Clone)]
pub struct Background {
    pub mean: Vec<f64>,
    pub cov: Matrix,
    pub count: usize,
    /// Ridge added to the diagonal before factorization.
    pub eps: f64,
    chol: Cholesky,
}

/// Ridge for a covariance: `eps_scale * trace / dim`, or `eps_scale` itself
/// when the covariance is identically zero.
pub fn ridge(cov: &Matrix, eps_scale: f64) -> f64 {
    let avg = cov.trace() / cov.rows.max(1) as f64;
    if avg > 0.0 {
        eps_scale * avg
    } else {
        eps_scale
    }
}

impl Background {
    pub fn new(mean: Vec<f64>, cov: Matrix, count: usize, eps_scale: f64) -> Result<Self> {
        if cov.rows != mean.len() || cov.cols != mean.len() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "mean of {} with {}x{} covariance",
                mean.len(),
                cov.rows,
                cov.cols
            )));
        }
        let eps = ridge(&cov, eps_scale);
        let mut reg = cov.clone();
        reg.add_diagonal(eps);
        let chol = Cholesky::new(&reg)?;
        Ok(Self {
            mean,
            cov,
            count,
            eps,
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(Cov + eps I)^-1`, for diagnostics and export.
    pub fn regularized_inverse(&self) -> Matrix {
        self.chol.inverse()
    }

    /// `(Cov + eps I)^-1 v` through the Cholesky factor.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        self.chol.solve(v)
    }

    /// Whitened filter for `target`.
    pub fn matched_filter(&self, target: &[f64]) -> Result<MatchedFilter> {
        if target.len() != self.dim() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "target of {} bands against {}-band statistics",
                target.len(),
                self.dim()
            )));
        }
        let w = self.solve(target);
        let energy = dot(target, &w);
        if !(energy > 0.0) {
            return Err(Error::ZeroDenominator);
        }
        let norm = math::sqrt(energy);
        Ok(MatchedFilter {
            mean: self.mean.clone(),
            alpha: w.iter().map(|v| v / norm).collect(),
        })
    }
}

/// `score(x) = (x - mean) . alpha` with
/// `alpha = C^-1 t / sqrt(t^T C^-1 t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedFilter {
    pub mean: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl MatchedFilter {
    #[inline]
    pub fn score(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.mean)
            .zip(&self.alpha)
            .map(|((x, m), a)| (x - m) * a)
            .sum()
    }
}

/// Two-pass background estimate over an in-memory slice of spectra.
pub fn background_of<'a, I>(pixels: I, dim: usize, eps_scale: f64) -> Result<Background>
where
    I: Iterator<Item = &'a [f64]> + Clone,
{
    let mut mean = MeanAccumulator::new(dim);
    pixels.clone().for_each(|p| mean.push(p));
    let mut scatter = ScatterAccumulator::new(mean.mean());
    pixels.for_each(|p| scatter.push(p));
    scatter.into_background(eps_scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_sample_covariance() {
        let pts: [&[f64]; 2] = [&[0.0, 0.0], &[2.0, 0.0]];
        let bg = background_of(pts.iter().copied(), 2, 1e-6).unwrap();
        assert_eq!(bg.mean, [1.0, 0.0]);
        assert_eq!(bg.cov.data, [1.0, 0.0, 0.0, 0.0]);
        assert!((bg.eps - 0.5e-6).abs() < 1e-18);
    }

    #[test]
    fn identical_pixels_use_absolute_ridge() {
        let v = [3.0, -1.0, 2.0];
        let pts = [&v[..]; 5];
        let bg = background_of(pts.iter().copied(), 3, 1e-6).unwrap();
        assert_eq!(bg.mean, v);
        assert!(bg.cov.data.iter().all(|x| *x == 0.0));
        let inv = bg.regularized_inverse();
        let expect = Matrix::identity(3);
        for (a, b) in inv.data.iter().zip(&expect.data) {
            assert!((a - b * 1e6).abs() < 1e-3);
        }
    }

    #[test]
    fn filter_rejects_wrong_length() {
        let pts: [&[f64]; 2] = [&[0.0, 1.0], &[2.0, 0.0]];
        let bg = background_of(pts.iter().copied(), 2, 1e-6).unwrap();
        assert!(matches!(bg.matched_filter(&[1.0]), Err(Error::DimensionMismatch(_))));
        assert_eq!(bg.matched_filter(&[0.0, 0.0]).unwrap_err(), Error::ZeroDenominator);
    }
}
