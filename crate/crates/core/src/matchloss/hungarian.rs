use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;
use crate::{Error, Result};

/// Injective map from ground-truth rows to prediction columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `prediction[g]` is the prediction matched to ground truth `g`.
    pub prediction: Vec<usize>,
    pub cost: f64,
}

impl Assignment {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.prediction.iter().copied().enumerate()
    }

    /// Ground truth matched to each prediction, if any.
    pub fn ground_truth_of(&self, predictions: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; predictions];
        for (g, p) in self.pairs() {
            out[p] = Some(g);
        }
        out
    }
}

/// Minimum-cost assignment of every row of a `G x P` cost matrix (`G <= P`)
/// to a distinct column, by shortest augmenting paths with dual potentials.
/// Columns are scanned in index order and only strictly better candidates
/// replace the current one, so ties resolve to the lowest column.
pub fn hungarian(cost: &Matrix) -> Result<Assignment> {
    let (n, m) = (cost.rows, cost.cols);
    if n > m {
        return Err(Error::TooFewPredictions {
            ground_truth: n,
            predictions: m,
        });
    }
    if cost.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteCost);
    }
    if n == 0 {
        return Ok(Assignment {
            prediction: Vec::new(),
            cost: 0.0,
        });
    }
    // 1-based arrays; row 0 / column 0 are sentinels
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut prediction = vec![0; n];
    for j in 1..=m {
        if row_of[j] != 0 {
            prediction[row_of[j] - 1] = j - 1;
        }
    }
    let total = prediction.iter().enumerate().map(|(g, &p)| cost.get(g, p)).sum();
    Ok(Assignment {
        prediction,
        cost: total,
    })
}
