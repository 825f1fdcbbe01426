use crate::{Error, Result};

/// Axis-aligned box as `(cx, cy, w, h)`.
pub type BoxCxcywh = [f64; 4];

#[inline]
fn corners(b: &BoxCxcywh) -> [f64; 4] {
    [b[0] - b[2] / 2.0, b[1] - b[3] / 2.0, b[0] + b[2] / 2.0, b[1] + b[3] / 2.0]
}

fn check(b: &BoxCxcywh) -> Result<()> {
    if b.iter().all(|v| v.is_finite()) && b[2] > 0.0 && b[3] > 0.0 {
        Ok(())
    } else {
        Err(Error::DegenerateBox)
    }
}

fn overlap(a: &BoxCxcywh, b: &BoxCxcywh) -> (f64, f64, f64) {
    let (ca, cb) = (corners(a), corners(b));
    let iw = (ca[2].min(cb[2]) - ca[0].max(cb[0])).max(0.0);
    let ih = (ca[3].min(cb[3]) - ca[1].max(cb[1])).max(0.0);
    let inter = iw * ih;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    let cw = ca[2].max(cb[2]) - ca[0].min(cb[0]);
    let ch = ca[3].max(cb[3]) - ca[1].min(cb[1]);
    (inter, union, cw * ch)
}

pub fn iou(a: &BoxCxcywh, b: &BoxCxcywh) -> Result<f64> {
    check(a)?;
    check(b)?;
    let (inter, union, _) = overlap(a, b);
    Ok(inter / union)
}

/// Generalized IoU: IoU minus the share of the enclosing box not covered
/// by the union.
pub fn giou(a: &BoxCxcywh, b: &BoxCxcywh) -> Result<f64> {
    check(a)?;
    check(b)?;
    let (inter, union, hull) = overlap(a, b);
    Ok(inter / union - (hull - union) / hull)
}

/// Sum of absolute coordinate differences.
pub fn l1(a: &BoxCxcywh, b: &BoxCxcywh) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
