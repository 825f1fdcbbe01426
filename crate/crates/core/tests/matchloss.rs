use methanemapper_core::detector::{DetectionSet, Tensor};
use methanemapper_core::linalg::Matrix;
use methanemapper_core::matchloss::*;
use methanemapper_core::Error;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Minimum over every injective row -> column map.
fn brute_force(cost: &Matrix) -> f64 {
    let (g, p) = (cost.rows, cost.cols);
    let mut best = f64::INFINITY;
    for perm in permutations(p) {
        let c: f64 = (0..g).map(|r| cost.get(r, perm[r])).sum();
        best = best.min(c);
    }
    best
}

fn random_cost(rng: &mut StdRng, g: usize, p: usize, integer: bool) -> Matrix {
    Matrix::from_vec(
        g,
        p,
        (0..g * p)
            .map(|_| if integer { rng.random_range(0..10) as f64 } else { rng.random::<f64>() * 10.0 })
            .collect(),
    )
}

fn is_injective(a: &Assignment) -> bool {
    let mut seen = a.prediction.clone();
    seen.sort();
    seen.dedup();
    seen.len() == a.prediction.len()
}

#[test]
fn diagonal_zero_gives_identity() {
    let mut c = Matrix::from_vec(3, 3, vec![1.0; 9]);
    for i in 0..3 {
        c.set(i, i, 0.0);
    }
    let a = hungarian(&c).unwrap();
    assert_eq!(a.prediction, [0, 1, 2]);
    assert_eq!(a.cost, 0.0);
}

#[test]
fn two_by_two_hand_case() {
    let a = hungarian(&Matrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0])).unwrap();
    assert_eq!(a.prediction, [0, 1]);
    assert_eq!(a.cost, 2.0);
}

#[test]
fn five_by_five_integer_matrices_match_brute_force() {
    for seed in 0..200 {
        let mut rng = StdRng::seed_from_u64(seed);
        let c = random_cost(&mut rng, 5, 5, true);
        let a = hungarian(&c).unwrap();
        assert!(is_injective(&a));
        assert_eq!(a.cost, brute_force(&c), "seed {seed}");
    }
}

#[test]
fn rectangular_up_to_six_match_brute_force() {
    let mut rng = StdRng::seed_from_u64(99);
    for _ in 0..500 {
        let p = rng.random_range(1..=6);
        let g = rng.random_range(1..=p);
        let c = random_cost(&mut rng, g, p, false);
        let a = hungarian(&c).unwrap();
        assert!(is_injective(&a));
        let sum: f64 = a.pairs().map(|(r, col)| c.get(r, col)).sum();
        assert_eq!(sum, a.cost);
        assert!((a.cost - brute_force(&c)).abs() <= 1e-9);
    }
}

#[test]
fn hungarian_errors() {
    assert_eq!(
        hungarian(&Matrix::zeros(3, 2)).unwrap_err(),
        Error::TooFewPredictions { ground_truth: 3, predictions: 2 }
    );
    assert_eq!(
        hungarian(&Matrix::from_vec(1, 2, vec![0.0, f64::NAN])).unwrap_err(),
        Error::NonFiniteCost
    );
}

proptest! {
    #[test]
    fn row_shift_keeps_assignment(seed in 0u64..10_000, shift in -50.0f64..50.0, row in 0usize..4) {
        let mut rng = StdRng::seed_from_u64(seed);
        let c = random_cost(&mut rng, 4, 5, false);
        let mut shifted = c.clone();
        for j in 0..5 {
            shifted.set(row, j, c.get(row, j) + shift);
        }
        prop_assert_eq!(hungarian(&c).unwrap().prediction, hungarian(&shifted).unwrap().prediction);
    }

    #[test]
    fn prediction_permutation_equivariance(seed in 0u64..10_000) {
        let mut rng = StdRng::seed_from_u64(seed);
        let c = random_cost(&mut rng, 3, 5, false);
        let mut perm: Vec<usize> = (0..5).collect();
        for i in (1..5).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        // column j of the permuted matrix is column perm[j] of the original
        let pc = Matrix::from_vec(3, 5, (0..15).map(|k| c.get(k / 5, perm[k % 5])).collect());
        let a = hungarian(&c).unwrap();
        let b = hungarian(&pc).unwrap();
        let mapped: Vec<usize> = b.prediction.iter().map(|&j| perm[j]).collect();
        prop_assert_eq!(a.prediction, mapped);
    }

    #[test]
    fn giou_bounds_and_symmetry(
        a in (0.0f64..1.0, 0.0f64..1.0, 0.01f64..1.0, 0.01f64..1.0),
        b in (0.0f64..1.0, 0.0f64..1.0, 0.01f64..1.0, 0.01f64..1.0),
    ) {
        let a = [a.0, a.1, a.2, a.3];
        let b = [b.0, b.1, b.2, b.3];
        let g = giou(&a, &b).unwrap();
        prop_assert!(g > -1.0 && g <= 1.0);
        prop_assert!(g <= iou(&a, &b).unwrap() + 1e-15);
        prop_assert!((g - giou(&b, &a).unwrap()).abs() <= 1e-12);
    }
}

/// Area fractions by counting cell centres on an `n x n` grid over the
/// unit square.
fn raster_giou(a: &BoxCxcywh, b: &BoxCxcywh, n: usize) -> f64 {
    let inside = |bx: &BoxCxcywh, x: f64, y: f64| {
        (x - bx[0]).abs() < bx[2] / 2.0 && (y - bx[1]).abs() < bx[3] / 2.0
    };
    let hull = [
        (a[0] - a[2] / 2.0).min(b[0] - b[2] / 2.0),
        (a[1] - a[3] / 2.0).min(b[1] - b[3] / 2.0),
        (a[0] + a[2] / 2.0).max(b[0] + b[2] / 2.0),
        (a[1] + a[3] / 2.0).max(b[1] + b[3] / 2.0),
    ];
    let (mut inter, mut union, mut enclosing) = (0usize, 0usize, 0usize);
    for i in 0..n {
        for j in 0..n {
            let (x, y) = ((j as f64 + 0.5) / n as f64, (i as f64 + 0.5) / n as f64);
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += (ia && ib) as usize;
            union += (ia || ib) as usize;
            enclosing += (x > hull[0] && x < hull[2] && y > hull[1] && y < hull[3]) as usize;
        }
    }
    inter as f64 / union as f64 - (enclosing - union) as f64 / enclosing as f64
}

#[test]
fn giou_cases() {
    let a = [0.3, 0.4, 0.2, 0.1];
    assert_eq!(giou(&a, &a).unwrap(), 1.0);
    let l = [0.25, 0.5, 0.2, 0.2];
    let r = [0.75, 0.5, 0.2, 0.2];
    let oracle = raster_giou(&l, &r, 2000);
    assert!((giou(&l, &r).unwrap() - oracle).abs() < 1e-3);
    // abutting boxes with equal heights: enclosing box equals the union
    let left = [0.25, 0.5, 0.5, 0.4];
    let right = [0.75, 0.5, 0.5, 0.4];
    assert!(giou(&left, &right).unwrap().abs() < 1e-12);
    assert_eq!(giou(&[0.5, 0.5, 0.0, 0.1], &a).unwrap_err(), Error::DegenerateBox);
}

fn detections(boxes: Vec<[f64; 4]>, logits: Vec<[f64; 2]>, heat: Vec<Tensor>) -> DetectionSet {
    DetectionSet {
        boxes,
        logits,
        heatmaps: heat,
        mask: Vec::new(),
        mask_rows: 0,
        mask_cols: 0,
    }
}

fn instance(bbox: BoxCxcywh, mask: BinaryMask) -> PlumeInstance {
    PlumeInstance {
        bbox,
        class: PlumeClass::PointSource,
        mask,
    }
}

#[test]
fn matching_cost_terms() {
    let gt_box = [0.5, 0.5, 0.2, 0.2];
    let gts = GroundTruth {
        instances: vec![instance(gt_box, BinaryMask::empty(4, 4))],
    };
    let perfect = detections(vec![gt_box], vec![[1000.0, 0.0]], vec![]);
    let c = matching_cost(&perfect, &gts, &LossWeights::default()).unwrap();
    assert_eq!(c.get(0, 0), 0.0);

    let shifted_box = [0.6, 0.5, 0.2, 0.2];
    let half = detections(vec![shifted_box, [0.1, 0.1, 0.1, 0.1]], vec![[0.0, 0.0], [0.0, 0.0]], vec![]);
    let pure_l1 = LossWeights { class: 0.0, l1: 1.0, giou: 0.0, mask: 0.0 };
    let c = matching_cost(&half, &gts, &pure_l1).unwrap();
    assert!((c.get(0, 0) - 0.1).abs() < 1e-12);
    assert!((c.get(0, 1) - (0.4 + 0.4 + 0.1 + 0.1)).abs() < 1e-12);

    let c = matching_cost(&half, &gts, &LossWeights::default()).unwrap();
    let g = raster_giou(&shifted_box, &gt_box, 2000);
    let expect = 0.5 + 5.0 * 0.1 + 2.0 * (1.0 - g);
    assert!((c.get(0, 0) - expect).abs() < 2e-3);
}

#[test]
fn perfect_fit_has_zero_loss() {
    let mask = BinaryMask::from_fn(8, 8, |r, c| r < 4 && c < 4);
    let gts = GroundTruth {
        instances: vec![instance([0.25, 0.25, 0.5, 0.5], mask)],
    };
    let heat = Tensor::from_vec(2, 2, 1, vec![1.0, 0.0, 0.0, 0.0]);
    let preds = detections(vec![[0.25, 0.25, 0.5, 0.5]], vec![[1000.0, -1000.0]], vec![heat]);
    let a = hungarian(&matching_cost(&preds, &gts, &LossWeights::default()).unwrap()).unwrap();
    let loss = set_loss(&preds, &gts, &a, &LossWeights::default()).unwrap();
    assert_eq!(loss, SetLoss::default());
}

#[test]
fn unmatched_prediction_class_loss() {
    let preds = detections(vec![[0.5, 0.5, 0.1, 0.1]], vec![[0.0, 0.0]], vec![]);
    let gts = GroundTruth::default();
    let a = hungarian(&matching_cost(&preds, &gts, &LossWeights::default()).unwrap()).unwrap();
    let loss = set_loss(&preds, &gts, &a, &LossWeights::default()).unwrap();
    assert!((loss.class - 0.5f64.ln().abs()).abs() < 1e-15);
}

#[test]
fn weights_scale_their_component_only() {
    let mask = BinaryMask::from_fn(8, 8, |r, _| r < 4);
    let gts = GroundTruth {
        instances: vec![instance([0.4, 0.5, 0.3, 0.2], mask)],
    };
    let heat = Tensor::from_vec(2, 2, 1, vec![0.7, 0.2, 0.4, 0.1]);
    let preds = detections(
        vec![[0.5, 0.5, 0.2, 0.2], [0.1, 0.9, 0.1, 0.1]],
        vec![[0.3, -0.2], [0.1, 0.4]],
        vec![heat.clone(), heat],
    );
    let w = LossWeights::default();
    let a = hungarian(&matching_cost(&preds, &gts, &w).unwrap()).unwrap();
    let base = set_loss(&preds, &gts, &a, &w).unwrap();
    for k in 0..4 {
        let mut w2 = w;
        match k {
            0 => w2.class *= 2.0,
            1 => w2.l1 *= 2.0,
            2 => w2.giou *= 2.0,
            _ => w2.mask *= 2.0,
        }
        let l = set_loss(&preds, &gts, &a, &w2).unwrap();
        let pairs = [(base.class, l.class), (base.l1, l.l1), (base.giou, l.giou), (base.mask, l.mask)];
        for (i, (b, x)) in pairs.iter().enumerate() {
            if i == k {
                assert_eq!(*x, 2.0 * b);
            } else {
                assert_eq!(x, b);
            }
        }
    }
}

#[test]
fn mask_resolution_mismatch() {
    let gts = GroundTruth {
        instances: vec![instance([0.5, 0.5, 0.2, 0.2], BinaryMask::empty(7, 7))],
    };
    let preds = detections(vec![[0.5, 0.5, 0.2, 0.2]], vec![[0.0, 0.0]], vec![Tensor::zeros(2, 2, 1)]);
    let a = hungarian(&matching_cost(&preds, &gts, &LossWeights::default()).unwrap()).unwrap();
    assert!(matches!(
        set_loss(&preds, &gts, &a, &LossWeights::default()),
        Err(Error::ResolutionMismatch(_))
    ));
}

#[test]
fn miou_cases() {
    let gt = BinaryMask::from_fn(20, 20, |r, c| (5..15).contains(&r) && (5..15).contains(&c));
    assert_eq!(miou(std::slice::from_ref(&gt), std::slice::from_ref(&gt)).unwrap(), 1.0);
    assert_eq!(miou(&[BinaryMask::empty(20, 20)], std::slice::from_ref(&gt)).unwrap(), 0.0);
    let half = BinaryMask::from_fn(20, 20, |r, c| (5..10).contains(&r) && (5..15).contains(&c));
    assert_eq!(miou(&[half], std::slice::from_ref(&gt)).unwrap(), 0.5);
    assert_eq!(miou(std::slice::from_ref(&gt), &[]).unwrap_err(), Error::EmptyGroundTruth);
    // a distant false component does not dilute the best match
    let with_noise = BinaryMask::from_fn(20, 20, |r, c| gt.get(r, c) || (r == 0 && c == 19));
    assert_eq!(miou(&[with_noise], &[gt]).unwrap(), 1.0);
}

fn scored(bbox: BoxCxcywh, score: f64) -> ScoredBox {
    ScoredBox { image: 0, class: PlumeClass::PointSource, bbox, score }
}

#[test]
fn map_cases() {
    let g = LabeledBox { image: 0, class: PlumeClass::PointSource, bbox: [0.5, 0.5, 0.2, 0.2] };
    let hit = [0.5, 0.5, 0.2, 0.2];
    let miss = [0.1, 0.1, 0.1, 0.1];
    assert_eq!(map_at_iou(&[scored(hit, 0.9)], &[g], 0.5).unwrap().map, 1.0);
    assert_eq!(map_at_iou(&[scored(hit, 0.9)], &[g], 0.95).unwrap().map, 1.0);
    assert_eq!(map_at_iou(&[], &[g], 0.5).unwrap().map, 0.0);
    assert_eq!(map_at_iou(&[scored(hit, 0.9), scored(miss, 0.8)], &[g], 0.5).unwrap().map, 1.0);
    assert_eq!(map_at_iou(&[scored(hit, 0.8), scored(miss, 0.9)], &[g], 0.5).unwrap().map, 0.5);
}

proptest! {
    #[test]
    fn low_scored_false_positive_never_raises_ap(seed in 0u64..5000) {
        let mut rng = StdRng::seed_from_u64(seed);
        let rand_box = |rng: &mut StdRng| [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8), rng.random_range(0.05..0.3), rng.random_range(0.05..0.3)];
        let gts: Vec<LabeledBox> = (0..3).map(|_| LabeledBox { image: 0, class: PlumeClass::PointSource, bbox: rand_box(&mut rng) }).collect();
        let mut dets: Vec<ScoredBox> = gts.iter().map(|g| {
            let mut b = g.bbox;
            b[0] += rng.random_range(-0.05..0.05);
            scored(b, rng.random_range(0.1..1.0))
        }).collect();
        let before = map_at_iou(&dets, &gts, 0.5).unwrap().map;
        dets.push(scored([0.05, 0.05, 0.02, 0.02], 0.0));
        let after = map_at_iou(&dets, &gts, 0.5).unwrap().map;
        prop_assert!(after <= before);
    }
}
