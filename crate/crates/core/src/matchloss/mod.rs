//! Set matching between predicted and annotated plumes, the training loss
//! terms evaluated on a matched set, and the mAP / mIOU metrics.

mod boxes;
mod hungarian;
mod mask;

pub use boxes::{giou, iou, l1, BoxCxcywh};
pub use hungarian::{hungarian, Assignment};
pub use mask::BinaryMask;

use alloc::format;
use alloc::vec::Vec;

use crate::detector::DetectionSet;
use crate::linalg::Matrix;
use crate::math;
use crate::{Error, Result};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PlumeClass {
    PointSource,
    DiffusedSource,
}

impl PlumeClass {
    pub const ALL: [PlumeClass; 2] = [PlumeClass::PointSource, PlumeClass::DiffusedSource];

    pub fn name(self) -> &'static str {
        match self {
            PlumeClass::PointSource => "point_source",
            PlumeClass::DiffusedSource => "diffused_source",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlumeInstance {
    pub bbox: BoxCxcywh,
    pub class: PlumeClass,
    pub mask: BinaryMask,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub instances: Vec<PlumeInstance>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub class: f64,
    pub l1: f64,
    pub giou: f64,
    pub mask: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            class: 1.0,
            l1: 5.0,
            giou: 2.0,
            mask: 1.0,
        }
    }
}

/// `-ln` of the two-way softmax probability of `logits[k]`, computed so
/// that a saturated correct logit gives exactly zero.
fn neg_log_softmax(logits: [f64; 2], k: usize) -> f64 {
    let other = logits[1 - k] - logits[k];
    if other > 0.0 {
        other + math::ln(1.0 + math::exp(-other))
    } else {
        math::ln(1.0 + math::exp(other))
    }
}

/// Probability each prediction assigns to the plume class.
fn plume_prob(logits: [f64; 2]) -> f64 {
    crate::detector::plume_probability(logits)
}

/// `cost[g][p] = w.class (1 - p_plume) + w.l1 |box_p - box_g|_1 + w.giou (1 - giou)`.
/// Both annotated classes are plumes, so the class term uses the plume
/// probability.
pub fn matching_cost(preds: &DetectionSet, gts: &GroundTruth, w: &LossWeights) -> Result<Matrix> {
    let mut cost = Matrix::zeros(gts.instances.len(), preds.len());
    for (g, inst) in gts.instances.iter().enumerate() {
        for p in 0..preds.len() {
            let c = w.class * (1.0 - plume_prob(preds.logits[p]))
                + w.l1 * l1(&preds.boxes[p], &inst.bbox)
                + w.giou * (1.0 - giou(&preds.boxes[p], &inst.bbox)?);
            cost.set(g, p, c);
        }
    }
    Ok(cost)
}

/// Weighted loss components of one matched set.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SetLoss {
    /// Mean class cross-entropy over all predictions.
    pub class: f64,
    /// Mean box L1 over matched pairs.
    pub l1: f64,
    /// Mean `1 - giou` over matched pairs.
    pub giou: f64,
    /// Mean per-pixel binary cross-entropy over matched pairs.
    pub mask: f64,
}

impl SetLoss {
    pub fn total(&self) -> f64 {
        self.class + self.l1 + self.giou + self.mask
    }
}

fn bce(p: f64, target: bool) -> f64 {
    const FLOOR: f64 = 1e-12;
    if target {
        -math::ln(p.max(FLOOR))
    } else {
        -math::ln((1.0 - p).max(FLOOR))
    }
}

/// Loss of a matched set. Unmatched predictions are pushed toward
/// no-object; masks are compared at heatmap resolution after reducing the
/// annotation by area majority.
pub fn set_loss(preds: &DetectionSet, gts: &GroundTruth, a: &Assignment, w: &LossWeights) -> Result<SetLoss> {
    if a.prediction.len() != gts.instances.len() {
        return Err(Error::DimensionMismatch(format!(
            "assignment covers {} of {} ground-truth instances",
            a.prediction.len(),
            gts.instances.len()
        )));
    }
    let matched = a.ground_truth_of(preds.len());
    let mut out = SetLoss::default();
    if !preds.is_empty() {
        let ce: f64 = matched
            .iter()
            .zip(&preds.logits)
            .map(|(m, l)| neg_log_softmax(*l, if m.is_some() { 0 } else { 1 }))
            .sum();
        out.class = w.class * ce / preds.len() as f64;
    }
    let n = a.prediction.len();
    if n == 0 {
        return Ok(out);
    }
    let (mut sl1, mut sg, mut sm) = (0.0, 0.0, 0.0);
    for (g, p) in a.pairs() {
        let inst = &gts.instances[g];
        sl1 += l1(&preds.boxes[p], &inst.bbox);
        sg += 1.0 - giou(&preds.boxes[p], &inst.bbox)?;
        let hm = preds
            .heatmaps
            .get(p)
            .ok_or_else(|| Error::ResolutionMismatch(format!("no heatmap for prediction {p}")))?;
        let target = inst.mask.downsample_majority(hm.h, hm.w)?;
        let pix: f64 = hm.data.iter().zip(&target.data).map(|(q, t)| bce(*q, *t)).sum();
        sm += pix / hm.data.len().max(1) as f64;
    }
    out.l1 = w.l1 * sl1 / n as f64;
    out.giou = w.giou * sg / n as f64;
    out.mask = w.mask * sm / n as f64;
    Ok(out)
}

/// Mean over annotated instances of the best IoU against any connected
/// component of any predicted mask.
pub fn miou(pred_masks: &[BinaryMask], gt_masks: &[BinaryMask]) -> Result<f64> {
    if gt_masks.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let (rows, cols) = (gt_masks[0].rows, gt_masks[0].cols);
    if let Some(m) = gt_masks.iter().chain(pred_masks).find(|m| (m.rows, m.cols) != (rows, cols)) {
        return Err(Error::DimensionMismatch(format!(
            "masks {rows}x{cols} and {}x{}",
            m.rows, m.cols
        )));
    }
    let components: Vec<BinaryMask> = pred_masks.iter().flat_map(|m| m.components()).collect();
    let mut total = 0.0;
    for gt in gt_masks {
        let mut best = 0.0f64;
        for c in &components {
            best = best.max(gt.iou(c)?);
        }
        total += best;
    }
    Ok(total / gt_masks.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub image: usize,
    pub class: PlumeClass,
    pub bbox: BoxCxcywh,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub image: usize,
    pub class: PlumeClass,
    pub bbox: BoxCxcywh,
}

/// Average precision for one class: all-point interpolated area under the
/// precision-recall curve, detections matched greedily by descending score
/// to the best-overlapping unmatched annotation in the same image.
pub fn average_precision(dets: &[ScoredBox], gts: &[LabeledBox], iou_thr: f64) -> Result<f64> {
    if gts.is_empty() {
        return Ok(0.0);
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut used = alloc::vec![false; gts.len()];
    let mut tp = 0usize;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(dets.len());
    for (k, &d) in order.iter().enumerate() {
        let det = &dets[d];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if used[g] || gt.image != det.image {
                continue;
            }
            let v = iou(&det.bbox, &gt.bbox)?;
            if v >= iou_thr && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
            tp += 1;
        }
        points.push((tp as f64 / gts.len() as f64, tp as f64 / (k + 1) as f64));
    }
    // precision envelope from the right, then sum over recall steps
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..points.len() {
        let (recall, _) = points[i];
        if recall > prev_recall {
            let envelope = points[i..].iter().map(|p| p.1).fold(0.0, f64::max);
            ap += (recall - prev_recall) * envelope;
            prev_recall = recall;
        }
    }
    Ok(ap)
}

/// Per-class AP averaged over the classes present in the annotations.
pub fn map_at_iou(dets: &[ScoredBox], gts: &[LabeledBox], iou_thr: f64) -> Result<MapReport> {
    let mut per_class = Vec::new();
    for class in PlumeClass::ALL {
        let g: Vec<LabeledBox> = gts.iter().filter(|b| b.class == class).copied().collect();
        if g.is_empty() {
            continue;
        }
        let d: Vec<ScoredBox> = dets.iter().filter(|b| b.class == class).copied().collect();
        per_class.push((class, average_precision(&d, &g, iou_thr)?));
    }
    let map = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().map(|(_, ap)| ap).sum::<f64>() / per_class.len() as f64
    };
    Ok(MapReport {
        map,
        per_class,
        iou_threshold: iou_thr,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    pub map: f64,
    pub per_class: Vec<(PlumeClass, f64)>,
    pub iou_threshold: f64,
}
