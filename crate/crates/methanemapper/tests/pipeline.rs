mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use common::{config, path, synth, TINY_DETECTOR};
use methanemapper::image::{read_png, NO_DATA_RGB};
use methanemapper::io::{read_float_map, write_float_map};
use methanemapper::pipeline::*;
use methanemapper::records::*;
use methanemapper::sidecar::{read_class_stats, read_weights, write_weights};
use methanemapper::synth::generate;
use methanemapper_core::detector::{Detector, DetectorConfig, Tensor, TileInput};
use methanemapper_core::hsi::TileRect;
use methanemapper_core::MaskedGrid;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tempfile::tempdir;

fn with<'a>(base: &[(&'a str, &'a str)], extra: &[(&'a str, &'a str)]) -> Vec<(&'a str, &'a str)> {
    base.iter().chain(extra).copied().collect()
}

#[test]
fn slf_ranks_plume_pixels_in_top_percent() {
    let dir = tempdir().unwrap();
    let s = synth(dir.path(), &[]);
    let cfg = config(dir.path(), &[("cube", &path(&s.cube))]);
    let doc = cmd_enhance(&cfg).unwrap();
    assert_eq!(doc.filter, "slf");
    assert_eq!(doc.n_classes, Some(2));
    assert!(dir.path().join("scene_class_stats.bin").is_file());
    assert!(dir.path().join("scene_classes.png").is_file());

    let map = read_float_map(&dir.path().join(&doc.map)).unwrap();
    let plume = generate(&scene_spec(&cfg)).unwrap().plume;
    let mut scores: Vec<f64> = map.iter_valid().map(|(_, v)| v).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    let cutoff = scores[scores.len() / 100];
    for (i, p) in plume.data.iter().enumerate() {
        if *p {
            assert!(map.values[i] >= cutoff, "plume pixel {i} scored {} below {cutoff}", map.values[i]);
        }
    }
}

#[test]
fn traditional_flag_routes_to_baseline() {
    let dir = tempdir().unwrap();
    let s = synth(dir.path(), &[]);
    let cfg = config(dir.path(), &[("cube", &path(&s.cube)), ("filter", "traditional"), ("name", "trad")]);
    let doc = cmd_enhance(&cfg).unwrap();
    assert_eq!(doc.filter, "traditional");
    assert_eq!(doc.n_classes, None);
    assert!(!dir.path().join("trad_class_stats.bin").exists());
    let trad = read_float_map(&dir.path().join(&doc.map)).unwrap();

    let slf_cfg = config(dir.path(), &[("cube", &path(&s.cube)), ("name", "slf")]);
    let slf = cmd_enhance(&slf_cfg).unwrap();
    let slf = read_float_map(&dir.path().join(&slf.map)).unwrap();
    assert_ne!(trad.values, slf.values);
}

#[test]
fn sensor_windows_follow_the_lookup_table() {
    let dir = tempdir().unwrap();
    let s = synth(dir.path(), &[]);
    let cfg = config(dir.path(), &[("cube", &path(&s.cube)), ("glt", &path(&s.glt))]);
    let doc = cmd_enhance(&cfg).unwrap();
    assert_eq!(doc.sensor_windows, Some(160usize.div_ceil(11)));
}

#[test]
fn class_stats_sidecar_round_trips() {
    let dir = tempdir().unwrap();
    let s = synth(dir.path(), &[]);
    let cfg = config(dir.path(), &[("cube", &path(&s.cube))]);
    cmd_enhance(&cfg).unwrap();
    let (stats, prov) = read_class_stats(&dir.path().join("scene_class_stats.bin")).unwrap();
    assert_eq!(prov, cfg.provenance());
    let cube = methanemapper::io::open_cube(&s.cube).unwrap();
    let sig = methanemapper_core::spectra::load_target_signature(
        methanemapper::synth::SYNTHETIC_SIGNATURE,
        cube.wavelengths(),
    )
    .unwrap();
    let fresh = compute_enhancement(&cfg, &cube, sig, None).unwrap().stats.unwrap();
    assert_eq!(stats.classes.len(), fresh.classes.len());
    for (a, b) in stats.classes.iter().zip(&fresh.classes) {
        assert_eq!(a.mean(), b.mean());
        assert_eq!(a.cov(), b.cov());
        assert_eq!(a.count(), b.count());
    }
}

#[test]
fn missing_header_field_is_a_user_error() {
    let dir = tempdir().unwrap();
    let s = synth(dir.path(), &[]);
    let text = fs::read_to_string(&s.cube).unwrap();
    let broken: String = text.lines().filter(|l| !l.starts_with("bands")).map(|l| format!("{l}\n")).collect();
    fs::write(&s.cube, broken).unwrap();
    let err = cmd_enhance(&config(dir.path(), &[("cube", &path(&s.cube))])).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("missing header field `bands`"), "{err}");
}

#[test]
fn detect_emits_one_record_per_query() {
    let dir = tempdir().unwrap();
    let s = synth(dir.path(), &[("synth.rows", "256"), ("synth.cols", "256")]);
    let cfg = config(dir.path(), &[("cube", &path(&s.cube)), ("synth.rows", "256"), ("synth.cols", "256")]);
    let doc = cmd_detect(&cfg).unwrap();
    assert_eq!(doc.tiles.len(), 1);
    assert_eq!(doc.records.len(), 100);
    assert_eq!(doc.n_kept, doc.records.iter().filter(|r| r.kept).count());
    assert!(doc.records.iter().all(|r| r.kept == (r.score >= 0.5)));

    let back: DetectionsFile = read_json(&dir.path().join("scene_detections.json"), DETECTIONS_SCHEMA).unwrap();
    assert_eq!(back, doc);
    let pred: PredictionFile = read_json(&dir.path().join(&doc.predictions), PREDICTIONS_SCHEMA).unwrap();
    assert_eq!(pred.detections.len(), doc.n_kept);
    let mask = read_png(&dir.path().join(&doc.mask)).unwrap();
    assert_eq!((mask.rows, mask.cols), (256, 256));
    assert_eq!(decode_rle(&pred.mask_rle, 256, 256).unwrap().count(), mask.data.iter().filter(|v| **v == 255).count());
}

#[test]
fn detect_rejects_tiles_off_the_stride() {
    let dir = tempdir().unwrap();
    let s = synth(dir.path(), &[]);
    let cfg = config(
        dir.path(),
        &with(&TINY_DETECTOR, &[("cube", &path(&s.cube)), ("tile_size", "48"), ("tile_overlap", "16")]),
    );
    let err = cmd_detect(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("multiple of 32"), "{err}");
}

#[test]
fn detect_tiles_overlap_and_use_precomputed_enhancement() {
    let dir = tempdir().unwrap();
    let s = synth(dir.path(), &[]);
    let base = [("cube", path(&s.cube))];
    let base: Vec<(&str, &str)> = base.iter().map(|(k, v)| (*k, v.as_str())).collect();
    cmd_enhance(&config(dir.path(), &base)).unwrap();
    let enh = path(&dir.path().join("scene_enhancement.hdr"));
    let mut pairs = with(&TINY_DETECTOR, &base);
    pairs.extend([("tile_size", "64"), ("tile_overlap", "32"), ("enhancement", enh.as_str())]);
    let doc = cmd_detect(&config(dir.path(), &pairs)).unwrap();
    // 128 rows: origins 0, 32, 64; 160 cols: 0, 32, 64, 96
    assert_eq!(doc.tiles.len(), 12);
    assert_eq!(doc.records.len(), 12 * 10);
    let scores = read_float_map(&dir.path().join(&doc.scores)).unwrap();
    assert_eq!((scores.rows, scores.cols), (128, 160));
    assert!(scores.values.iter().all(|v| (0.0..=1.0).contains(v)));
}

fn random_input(cfg: &DetectorConfig, size: usize, seed: u64) -> TileInput {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut t = |c: usize| Tensor::from_vec(size, size, c, (0..size * size * c).map(|_| rng.random_range(-1.0..1.0)).collect());
    TileInput {
        rgb: t(cfg.rgb_channels),
        swir: t(cfg.swir_channels),
        enhancement: t(1),
    }
}

#[test]
fn overlapping_tiles_fuse_by_per_pixel_max() {
    let cfg = DetectorConfig::tiny();
    let input = random_input(&cfg, 64, 3);
    let a = Detector::new(DetectorConfig { seed: 1, ..cfg.clone() }).unwrap().forward(&input).unwrap();
    let b = Detector::new(DetectorConfig { seed: 2, ..cfg.clone() }).unwrap().forward(&input).unwrap();
    let (sa, sb) = (tile_scores(&a, 64, 0.0), tile_scores(&b, 64, 0.0));
    let tiles = [TileRect { row0: 0, col0: 0, size: 64 }, TileRect { row0: 0, col0: 32, size: 64 }];
    let fused = fuse_max(64, 96, &tiles, &[sa.clone(), sb.clone()]);

    let mut disagreements = 0;
    for r in 0..64 {
        for c in 0..96 {
            let va = (c < 64).then(|| sa[r * 64 + c]);
            let vb = (c >= 32).then(|| sb[r * 64 + c - 32]);
            let expect = match (va, vb) {
                (Some(x), Some(y)) => {
                    disagreements += (x != y) as usize;
                    x.max(y)
                }
                (Some(x), None) | (None, Some(x)) => x,
                (None, None) => unreachable!(),
            };
            assert_eq!(fused.get(r, c), Some(expect));
        }
    }
    assert!(disagreements > 0, "seeds should make the tiles disagree");
}

#[test]
fn confidence_threshold_gates_tile_scores() {
    let cfg = DetectorConfig::tiny();
    let ds = Detector::new(cfg.clone()).unwrap().forward(&random_input(&cfg, 64, 4)).unwrap();
    assert!(tile_scores(&ds, 64, 1.01).iter().all(|v| *v == 0.0));
    let all = tile_scores(&ds, 64, 0.0);
    assert!(all.iter().any(|v| *v > 0.0));
}

fn annotation(rows: usize, cols: usize, instances: &[(&str, [usize; 4])]) -> AnnotationFile {
    let inst = instances
        .iter()
        .map(|(class, [r0, r1, c0, c1])| {
            let mask = methanemapper_core::matchloss::BinaryMask::from_fn(rows, cols, |r, c| (*r0..*r1).contains(&r) && (*c0..*c1).contains(&c));
            InstanceRecord {
                class: class.to_string(),
                bbox: support_box(&mask).unwrap(),
                mask_rle: encode_rle(&mask.data),
            }
        })
        .collect();
    AnnotationFile {
        schema: ANNOTATIONS_SCHEMA.into(),
        config_hash: String::new(),
        seed: 0,
        rows,
        cols,
        instances: inst,
    }
}

fn predictions(gt: &AnnotationFile, detections: Vec<PredictionRecord>, mask: Vec<bool>) -> PredictionFile {
    PredictionFile {
        schema: PREDICTIONS_SCHEMA.into(),
        config_hash: String::new(),
        seed: 0,
        rows: gt.rows,
        cols: gt.cols,
        detections,
        mask_rle: encode_rle(&mask),
    }
}

fn union_mask(gt: &AnnotationFile) -> Vec<bool> {
    let mut m = vec![false; gt.rows * gt.cols];
    for i in &gt.instances {
        let d = decode_rle(&i.mask_rle, gt.rows, gt.cols).unwrap();
        m.iter_mut().zip(&d.data).for_each(|(o, v)| *o |= v);
    }
    m
}

fn run_eval(dir: &Path, gt: &AnnotationFile, pred: &PredictionFile) -> methanemapper::Result<MetricsFile> {
    let (g, p) = (dir.join("gt"), dir.join("pred"));
    write_json(&g.join("img.json"), gt).unwrap();
    write_json(&p.join("img.json"), pred).unwrap();
    cmd_eval(&config(dir, &[("gt_dir", &path(&g)), ("pred_dir", &path(&p))]))
}

#[test]
fn perfect_predictions_score_one() {
    let dir = tempdir().unwrap();
    let gt = annotation(40, 40, &[("point_source", [2, 10, 3, 12]), ("diffused_source", [20, 35, 20, 30])]);
    let dets = gt
        .instances
        .iter()
        .map(|i| PredictionRecord { class: Some(i.class.clone()), bbox: i.bbox, score: 0.9 })
        .collect();
    let pred = predictions(&gt, dets, union_mask(&gt));
    let m = run_eval(dir.path(), &gt, &pred).unwrap();
    assert_eq!(m.map_50, 1.0);
    assert_eq!(m.miou, 1.0);
    assert!(!m.class_agnostic);
    assert_eq!(m.per_class_ap.len(), 2);
    assert!(dir.path().join("scene_metrics.json").is_file());
}

#[test]
fn empty_predictions_score_zero() {
    let dir = tempdir().unwrap();
    let gt = annotation(40, 40, &[("point_source", [2, 10, 3, 12])]);
    let pred = predictions(&gt, Vec::new(), vec![false; 1600]);
    let m = run_eval(dir.path(), &gt, &pred).unwrap();
    assert_eq!(m.map_50, 0.0);
    assert_eq!(m.miou, 0.0);
}

/// Two plumes, three detections by descending score: hit, miss, hit. The
/// precision-recall walk is (0.5, 1), (0.5, 1/2), (1, 2/3), so the
/// envelope gives 0.5 * 1 + 0.5 * 2/3.
#[test]
fn three_detection_hand_case() {
    let dir = tempdir().unwrap();
    let gt = annotation(40, 40, &[("point_source", [2, 10, 2, 10]), ("point_source", [20, 30, 20, 30])]);
    let (g1, g2) = (gt.instances[0].bbox, gt.instances[1].bbox);
    let det = |bbox, score| PredictionRecord { class: Some("point_source".into()), bbox, score };
    let dets = vec![det(g1, 0.9), det([0.9, 0.1, 0.05, 0.05], 0.8), det(g2, 0.7)];
    let pred = predictions(&gt, dets, union_mask(&gt));
    let m = run_eval(dir.path(), &gt, &pred).unwrap();
    assert_eq!(m.map_50, 0.5 * 1.0 + 0.5 * (2.0 / 3.0));
    assert_eq!(m.per_class_ap["point_source"], m.map_50);
}

#[test]
fn class_free_detections_evaluate_agnostically() {
    let dir = tempdir().unwrap();
    let gt = annotation(40, 40, &[("diffused_source", [2, 10, 2, 10])]);
    let dets = vec![PredictionRecord { class: None, bbox: gt.instances[0].bbox, score: 0.6 }];
    let pred = predictions(&gt, dets, union_mask(&gt));
    let m = run_eval(dir.path(), &gt, &pred).unwrap();
    assert!(m.class_agnostic);
    assert_eq!(m.map_50, 1.0);
    assert_eq!(m.per_class_ap.keys().collect::<Vec<_>>(), ["plume"]);
}

#[test]
fn eval_without_annotations_fails() {
    let dir = tempdir().unwrap();
    let gt = annotation(10, 10, &[]);
    let pred = predictions(&gt, Vec::new(), vec![false; 100]);
    let err = run_eval(dir.path(), &gt, &pred).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn synthetic_ground_truth_round_trips_through_annotate_map() {
    let dir = tempdir().unwrap();
    let s = synth(dir.path(), &[]);
    let out = dir.path().join("ann");
    let cfg = config(&out, &[("locations", &path(&s.locations)), ("annotations", &path(&s.patches))]);
    let doc = cmd_annotate_map(&cfg).unwrap();
    let truth: AnnotationFile = read_json(&s.gt_dir.join("scene.json"), ANNOTATIONS_SCHEMA).unwrap();
    assert_eq!(doc.instances.len(), 1);
    assert_eq!(doc.instances[0].mask_rle, truth.instances[0].mask_rle);
    let png = read_png(&out.join("scene_annotation.png")).unwrap();
    let red = (0..png.rows * png.cols).filter(|i| png.rgb(i / png.cols, i % png.cols) == [255, 0, 0]).count();
    assert_eq!(red, generate(&scene_spec(&cfg)).unwrap().plume.count());
}

fn plot(dir: &Path, grid: &MaskedGrid) -> (methanemapper::image::Png, PlotFile) {
    let hdr = write_float_map(&dir.join("map"), grid, "test map", None).unwrap();
    let doc = cmd_plot(&config(dir, &[("input", &path(&hdr))])).unwrap();
    (read_png(&dir.join("scene_plot.png")).unwrap(), doc)
}

#[test]
fn constant_map_plots_uniform() {
    let dir = tempdir().unwrap();
    let (png, doc) = plot(dir.path(), &MaskedGrid::from_values(4, 5, vec![3.25; 20]));
    let first = png.rgb(0, 0);
    assert!((0..20).all(|i| png.rgb(i / 5, i % 5) == first));
    assert_eq!(doc.scaling.unwrap().gain, 0.0);
}

#[test]
fn plot_extremes_hit_ramp_ends() {
    let dir = tempdir().unwrap();
    let values: Vec<f64> = (0..12).map(|i| -2.0 + 0.5 * i as f64).collect();
    let (png, doc) = plot(dir.path(), &MaskedGrid::from_values(3, 4, values));
    assert_eq!(png.rgb(0, 0), [0; 3]);
    assert_eq!(png.rgb(2, 3), [255; 3]);
    let s = doc.scaling.unwrap();
    assert_eq!((s.lo, s.hi), (-2.0, 3.5));
    let side = fs::read_to_string(dir.path().join("scene_plot.txt")).unwrap();
    assert!(side.contains("min -2\n") && side.contains("max 3.5\n"), "{side}");
}

#[test]
fn nan_pixels_plot_as_sentinel() {
    let dir = tempdir().unwrap();
    let mut values = vec![1.0, 2.0, 3.0, 4.0];
    values[2] = f64::NAN;
    let (png, _) = plot(dir.path(), &MaskedGrid::from_values(2, 2, values));
    assert_eq!(png.rgb(1, 0), NO_DATA_RGB);
    assert!([png.rgb(0, 0), png.rgb(0, 1), png.rgb(1, 1)].iter().all(|p| *p != NO_DATA_RGB));
    assert_eq!(png.rgb(0, 0), [0; 3]);
    assert_eq!(png.rgb(1, 1), [255; 3]);
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_none_or(|x| x != "timestamp") {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn reruns_are_byte_identical_apart_from_timestamps() {
    let dir = tempdir().unwrap();
    let s = synth(dir.path(), &[]);
    let out = dir.path().join("run");
    let mut pairs = with(&TINY_DETECTOR, &[("tile_size", "64"), ("tile_overlap", "32")]);
    let cube = path(&s.cube);
    pairs.push(("cube", &cube));
    let cfg = config(&out, &pairs);
    cmd_enhance(&cfg).unwrap();
    cmd_detect(&cfg).unwrap();
    let first = snapshot(&out);
    assert!(first.keys().any(|k| k.ends_with(".png")));
    assert!(out.join("scene_enhance.timestamp").is_file());
    cmd_enhance(&cfg).unwrap();
    cmd_detect(&cfg).unwrap();
    assert_eq!(snapshot(&out), first);
}

#[test]
fn outputs_carry_hash_and_seed() {
    let dir = tempdir().unwrap();
    let s = synth(dir.path(), &[("seed", "7")]);
    let cfg = config(dir.path(), &[("cube", &path(&s.cube)), ("seed", "7")]);
    let doc = cmd_enhance(&cfg).unwrap();
    assert_eq!(doc.config_hash, cfg.hash());
    assert_eq!(doc.seed, 7);
    let hdr = fs::read_to_string(dir.path().join(&doc.map)).unwrap();
    assert!(hdr.contains(&format!("config hash = {}", cfg.hash())), "{hdr}");
    assert!(hdr.contains("seed = 7"), "{hdr}");
    let png = fs::read(dir.path().join(&doc.png)).unwrap();
    let find = |needle: &[u8]| png.windows(needle.len()).any(|w| w == needle);
    assert!(find(format!("config_hash\0{}", cfg.hash()).as_bytes()));
    assert!(find(b"seed\x007"));
}

#[test]
fn weights_round_trip_through_files() {
    let dir = tempdir().unwrap();
    let cfg = DetectorConfig::tiny();
    let src = Detector::new(DetectorConfig { seed: 11, ..cfg.clone() }).unwrap();
    let prov = methanemapper::Provenance { config_hash: "abc".into(), seed: 11 };
    write_weights(&dir.path().join("w"), &src, &prov).unwrap();
    let mut dst = Detector::new(cfg.clone()).unwrap();
    let input = random_input(&cfg, 64, 5);
    assert_ne!(dst.forward(&input).unwrap(), src.forward(&input).unwrap());
    read_weights(&dir.path().join("w"), &mut dst).unwrap();
    assert_eq!(dst.forward(&input).unwrap(), src.forward(&input).unwrap());

    let mut wrong = Detector::new(DetectorConfig { n_queries: 11, ..cfg }).unwrap();
    assert_eq!(read_weights(&dir.path().join("w"), &mut wrong).unwrap_err().exit_code(), 2);
}
