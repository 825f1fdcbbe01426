use methanemapper_core::detector::*;
use methanemapper_core::linalg::Matrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn random_tensor(seed: u64, h: usize, w: usize, c: usize, scale: f64) -> Tensor {
    let mut rng = StdRng::seed_from_u64(seed);
    Tensor::from_vec(h, w, c, (0..h * w * c).map(|_| rng.random_range(-scale..scale)).collect())
}

fn input(cfg: &DetectorConfig, size: usize, seed: u64) -> TileInput {
    TileInput {
        rgb: random_tensor(seed, size, size, cfg.rgb_channels, 2.0),
        swir: random_tensor(seed + 1, size, size, cfg.swir_channels, 2.0),
        enhancement: random_tensor(seed + 2, size, size, 1, 2.0),
    }
}

fn row_sums_ok(m: &Matrix) -> bool {
    (0..m.rows).all(|r| (m.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12)
}

#[test]
fn shape_contract_across_tile_sizes() {
    let cfg = DetectorConfig::tiny();
    let det = Detector::new(cfg.clone()).unwrap();
    for size in [64, 128, 256] {
        let t = det.forward_trace(&input(&cfg, size, 3)).unwrap();
        let s = size / 32;
        let n = cfg.backbone_channels;
        let d = cfg.d_model;
        let widths = stage_widths(n);
        for (i, st) in t.rgb_stages.iter().enumerate() {
            assert_eq!(st.shape(), (size >> (i + 1), size >> (i + 1), widths[i]));
        }
        assert_eq!(t.f_rgb.shape(), (s, s, n));
        assert_eq!(t.f_swir.shape(), (s, s, n));
        assert_eq!(t.f_comb.shape(), (s, s, n));
        assert_eq!(t.f_z.shape(), (s, s, d));
        assert_eq!((t.positions.rows, t.positions.cols), (s * s, d));
        assert_eq!(t.f_e.shape(), (s, s, d));
        assert_eq!(t.f_mc.shape(), (s, s, d));
        assert_eq!((t.q_ref.rows, t.q_ref.cols), (cfg.n_queries, d));
        assert_eq!((t.e_out.rows, t.e_out.cols), (cfg.n_queries, cfg.embed_out));
        let ds = &t.detections;
        assert_eq!(ds.len(), cfg.n_queries);
        assert!(ds.heatmaps.iter().all(|h| h.shape() == (size / 4, size / 4, 1)));
        assert_eq!((ds.mask_rows, ds.mask_cols), (size, size));
        assert!(t.attention.iter().all(row_sums_ok));
    }
}

#[test]
fn default_geometry_for_256_tile() {
    let cfg = DetectorConfig::default();
    let det = Detector::new(cfg.clone()).unwrap();
    let t = det.forward_trace(&input(&cfg, 256, 9)).unwrap();
    assert_eq!(t.f_rgb.shape(), (8, 8, 64));
    assert_eq!(t.f_swir.shape(), (8, 8, 64));
    assert_eq!(t.f_e.shape(), (8, 8, 256));
    assert_eq!(t.f_mc.shape(), (8, 8, 256));
    assert_eq!((t.q_ref.rows, t.q_ref.cols), (100, 256));
    assert_eq!((t.e_out.rows, t.e_out.cols), (100, 512));
    assert_eq!(t.detections.heatmaps[0].shape(), (64, 64, 1));
    assert_eq!(t.detections.mask.len(), 256 * 256);
    assert!(t.attention.iter().all(row_sums_ok));
    assert!(t.detections.boxes.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    assert!(t.detections.heatmaps.iter().all(|h| h.is_finite()));
}

#[test]
fn bad_geometry_rejected() {
    let cfg = DetectorConfig::tiny();
    let det = Detector::new(cfg.clone()).unwrap();
    let mut inp = input(&cfg, 64, 1);
    inp.rgb = random_tensor(1, 48, 64, 3, 1.0);
    assert!(matches!(det.forward(&inp), Err(methanemapper_core::Error::BadGeometry(_))));
}

#[test]
fn zero_input_zero_biases_gives_zero_features() {
    let cfg = DetectorConfig::tiny();
    let mut det = Detector::new(cfg.clone()).unwrap();
    det.zero_biases();
    let zero = Tensor::zeros(64, 64, cfg.swir_channels);
    assert!(det.swir_backbone.forward(&zero).unwrap().data.iter().all(|v| *v == 0.0));
    let enh = Tensor::zeros(64, 64, 1);
    assert!(det.sfg_forward(&enh).unwrap().data.iter().all(|v| *v == 0.0));
}

#[test]
fn swir_branch_matches_rgb_geometry() {
    let cfg = DetectorConfig {
        swir_channels: 100,
        ..DetectorConfig::tiny()
    };
    let det = Detector::new(cfg.clone()).unwrap();
    let f = det.swir_backbone.forward(&random_tensor(2, 256, 256, 100, 1.0)).unwrap();
    assert_eq!(f.shape(), (8, 8, cfg.backbone_channels));
}

#[test]
fn concat_projection_identity_and_affinity() {
    let cfg = DetectorConfig::tiny();
    let mut det = Detector::new(cfg.clone()).unwrap();
    let n = cfg.backbone_channels;
    let a = random_tensor(4, 8, 8, n, 1.0);
    let b = random_tensor(5, 8, 8, n, 1.0);
    let out = det.concat_project(&a, &b).unwrap();
    assert_eq!(out.shape(), (8, 8, n));

    // affine: P(x + y) == P(x) + P(y) - P(0) on the concatenated input
    let c = random_tensor(6, 8, 8, n, 1.0);
    let e = random_tensor(7, 8, 8, n, 1.0);
    let sum_ab = Tensor::from_vec(8, 8, n, a.data.iter().zip(&c.data).map(|(x, y)| x + y).collect());
    let sum_be = Tensor::from_vec(8, 8, n, b.data.iter().zip(&e.data).map(|(x, y)| x + y).collect());
    let lhs = det.concat_project(&sum_ab, &sum_be).unwrap();
    let p1 = det.concat_project(&a, &b).unwrap();
    let p2 = det.concat_project(&c, &e).unwrap();
    let p0 = det.concat_project(&Tensor::zeros(8, 8, n), &Tensor::zeros(8, 8, n)).unwrap();
    for i in 0..lhs.data.len() {
        assert!((lhs.data[i] - (p1.data[i] + p2.data[i] - p0.data[i])).abs() <= 1e-9);
    }

    let proj = &mut det.concat_proj;
    proj.weight = Matrix::zeros(n, 2 * n);
    for i in 0..n {
        proj.weight.set(i, i, 1.0);
    }
    proj.bias = vec![0.0; n];
    assert_eq!(det.concat_project(&a, &b).unwrap(), a);
}

#[test]
fn zero_layers_pass_through() {
    let cfg = DetectorConfig {
        n_layers: 0,
        ..DetectorConfig::tiny()
    };
    let det = Detector::new(cfg.clone()).unwrap();
    let t = det.forward_trace(&input(&cfg, 64, 8)).unwrap();
    assert_eq!(t.f_e, t.f_z);
    assert_eq!(t.q_ref, t.queries);
    assert_eq!(t.e_out, det.decoder.out.forward(&t.q_ref).unwrap());
}

fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    Matrix::from_vec(m.rows, m.cols, perm.iter().flat_map(|&i| m.row(i).to_vec()).collect())
}

fn perm(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut rng = StdRng::seed_from_u64(seed);
    for i in (1..n).rev() {
        p.swap(i, rng.random_range(0..=i));
    }
    p
}

#[test]
fn encoder_equivariant_without_positions() {
    let cfg = DetectorConfig::tiny();
    let det = Detector::new(cfg.clone()).unwrap();
    let x = random_tensor(10, 4, 4, cfg.d_model, 1.0).into_tokens();
    let zero = Matrix::zeros(16, cfg.d_model);
    let p = perm(16, 1);
    let a = det.encoder.forward(&x, &zero, None).unwrap();
    let b = det.encoder.forward(&permute_rows(&x, &p), &zero, None).unwrap();
    assert!(permute_rows(&a, &p).max_abs_diff(&b) <= 1e-9);
}

#[test]
fn refiner_ignores_candidate_token_order() {
    let cfg = DetectorConfig::tiny();
    let det = Detector::new(cfg.clone()).unwrap();
    let f_mc = random_tensor(11, 4, 4, cfg.d_model, 1.0).into_tokens();
    let p = perm(16, 2);
    let a = det.refiner.forward(&f_mc, &det.queries, None).unwrap();
    let b = det.refiner.forward(&permute_rows(&f_mc, &p), &det.queries, None).unwrap();
    assert!(a.max_abs_diff(&b) <= 1e-9);
}

#[test]
fn constant_candidates_give_uniform_cross_attention() {
    let cfg = DetectorConfig::tiny();
    let det = Detector::new(cfg.clone()).unwrap();
    let token: Vec<f64> = (0..cfg.d_model).map(|i| (i as f64 * 0.3).sin()).collect();
    let f_mc = Matrix::from_vec(16, cfg.d_model, token.repeat(16));
    let layer = &det.refiner.layers[0];
    let q = layer.norm2.forward(&det.queries);
    let out = layer.cross_attn.forward(&q, &f_mc, &f_mc, None).unwrap();
    for r in 1..out.rows {
        for (a, b) in out.row(r).iter().zip(out.row(0)) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn decoder_rows_are_independent() {
    let cfg = DetectorConfig::tiny();
    let det = Detector::new(cfg.clone()).unwrap();
    let f_e = random_tensor(12, 2, 2, cfg.d_model, 1.0).into_tokens();
    let pos = positional_embedding(2, 2, cfg.d_model).unwrap();
    let q = random_tensor(13, cfg.n_queries, 1, cfg.d_model, 1.0).into_tokens();
    let base = det.decoder.forward(&f_e, &pos, &q, None).unwrap();
    let mut q2 = q.clone();
    q2.row_mut(3).iter_mut().for_each(|v| *v = 0.0);
    let changed = det.decoder.forward(&f_e, &pos, &q2, None).unwrap();
    for r in 0..cfg.n_queries {
        if r == 3 {
            assert_ne!(base.row(r), changed.row(r));
        } else {
            assert_eq!(base.row(r), changed.row(r));
        }
    }
}

#[test]
fn sfg_first_stage_is_linear_in_input() {
    let cfg = DetectorConfig::tiny();
    let mut det = Detector::new(cfg.clone()).unwrap();
    det.zero_biases();
    let enh = random_tensor(14, 64, 64, 1, 3.0);
    let twice = Tensor::from_vec(64, 64, 1, enh.data.iter().map(|v| 2.0 * v).collect());
    let conv = &det.sfg_backbone.stages[0];
    let a = conv.forward(&enh).unwrap();
    let b = conv.forward(&twice).unwrap();
    for (x, y) in a.data.iter().zip(&b.data) {
        assert!((2.0 * x - y).abs() <= 1e-12 * x.abs().max(1.0));
    }
}

#[test]
fn deterministic_under_seed() {
    let cfg = DetectorConfig::tiny();
    let a = Detector::new(cfg.clone()).unwrap().forward(&input(&cfg, 64, 5)).unwrap();
    let b = Detector::new(cfg.clone()).unwrap().forward(&input(&cfg, 64, 5)).unwrap();
    assert_eq!(a, b);
    let other = Detector::new(DetectorConfig { seed: 1, ..cfg.clone() }).unwrap();
    assert_ne!(other.forward(&input(&cfg, 64, 5)).unwrap().boxes, a.boxes);
}

#[test]
fn finite_for_bounded_inputs() {
    let cfg = DetectorConfig::tiny();
    let det = Detector::new(cfg.clone()).unwrap();
    let inp = TileInput {
        rgb: random_tensor(20, 64, 64, 3, 10.0),
        swir: random_tensor(21, 64, 64, cfg.swir_channels, 10.0),
        enhancement: random_tensor(22, 64, 64, 1, 10.0),
    };
    let t = det.forward_trace(&inp).unwrap();
    for m in [&t.f_e, &t.f_mc, &t.f_comb] {
        assert!(m.is_finite());
    }
    assert!(t.e_out.data.iter().all(|v| v.is_finite()));
    assert!(t.detections.boxes.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    assert!(t.detections.heatmaps.iter().all(|h| h.is_finite()));
}

#[test]
fn no_confident_query_means_empty_mask() {
    let heat = vec![Tensor::from_vec(2, 2, 1, vec![0.9; 4]); 3];
    let (mask, h, w) = merge_masks(&heat, &[0.1, 0.49, 0.2], 0.5, 0.5, 4);
    assert_eq!((h, w), (8, 8));
    assert!(mask.iter().all(|m| !m));
    let (mask, _, _) = merge_masks(&heat, &[0.1, 0.5, 0.2], 0.5, 0.5, 4);
    assert!(mask.iter().all(|m| *m));
}

#[test]
fn merged_mask_upsamples_by_nearest() {
    let heat = vec![Tensor::from_vec(2, 2, 1, vec![0.6, 0.1, 0.1, 0.4])];
    let (mask, _, w) = merge_masks(&heat, &[0.9], 0.5, 0.5, 4);
    for y in 0..8 {
        for x in 0..8 {
            assert_eq!(mask[y * w + x], y < 4 && x < 4);
        }
    }
}

#[test]
fn manifest_round_trips_through_visitor() {
    let det = Detector::new(DetectorConfig::tiny()).unwrap();
    let manifest = det.manifest();
    let mut names: Vec<&str> = manifest.iter().map(|(n, _)| n.as_str()).collect();
    let total = names.len();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), total, "parameter names unique");
    assert_eq!(det.parameter_count(), manifest.iter().map(|(_, n)| n).sum::<usize>());
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(6))]
    #[test]
    fn forward_is_deterministic_and_finite(seed in 0u64..10_000, input_seed in 0u64..10_000) {
        let cfg = DetectorConfig { seed, ..DetectorConfig::tiny() };
        let mut rng = StdRng::seed_from_u64(input_seed);
        let mut t = |c: usize| Tensor::from_vec(64, 64, c, (0..64 * 64 * c).map(|_| rng.random_range(-10.0..10.0)).collect());
        let inp = TileInput { rgb: t(cfg.rgb_channels), swir: t(cfg.swir_channels), enhancement: t(1) };
        let a = Detector::new(cfg.clone()).unwrap().forward_trace(&inp).unwrap();
        let b = Detector::new(cfg).unwrap().forward_trace(&inp).unwrap();
        proptest::prop_assert_eq!(&a.detections, &b.detections);
        proptest::prop_assert!(a.e_out.data.iter().all(|v| v.is_finite()));
        proptest::prop_assert!(a.detections.heatmaps.iter().all(|h| h.is_finite()));
        proptest::prop_assert!(a.attention.iter().all(row_sums_ok));
    }
}
