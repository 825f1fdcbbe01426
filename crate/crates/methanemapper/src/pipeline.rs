//! The subcommands as library functions. Each one reads its inputs from
//! the resolved configuration, writes its artifacts under `output_dir` and
//! returns the JSON document it wrote.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use methanemapper_core::annotate::{composite, map_annotation, AnnotationPatch, ConcentrationLayer};
use methanemapper_core::detector::{standardize_channels, DetectionSet, Detector, Tensor, TileInput, DOWNSAMPLE, MASK_STRIDE};
use methanemapper_core::hsi::{plan_tiles, ByteSource, DataType, HyperCube, TileRect};
use methanemapper_core::landcover::{class_stats, classify, merge_small_classes, ClassMap, ClassStats};
use methanemapper_core::matchloss::{map_at_iou, miou, LabeledBox, PlumeClass, ScoredBox};
use methanemapper_core::slf::{matched_filter_traditional, sensor_groups, slf_enhance, EnhancementMap, SensorGrouping};
use methanemapper_core::spectra::{compose_rgb_block, load_target_signature, ndvi, ndwi, rgb_weights, select_bands_in, TargetSignature, SWIR_NM};
use methanemapper_core::{Error as CoreError, MaskedGrid};
use rayon::prelude::*;

use crate::config::{FilterKind, PipelineConfig};
use crate::error::{AppError, Context, Result};
use crate::image::{self, AffineScale, NO_DATA_RGB};
use crate::io::{self, RasterSpec};
use crate::records::*;
use crate::sidecar;
use crate::synth::{self, SceneSpec, SYNTHETIC_SIGNATURE};

fn out_path(cfg: &PipelineConfig, suffix: &str) -> PathBuf {
    cfg.output_dir.join(format!("{}{suffix}", cfg.name))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Wall-clock time lives only here so that every other artifact is
/// reproducible.
fn write_timestamp(cfg: &PipelineConfig, command: &str) -> Result<()> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let path = out_path(cfg, &format!("_{command}.timestamp"));
    fs::write(&path, format!("command={command}\nunix_seconds={secs}\nconfig_hash={}\n", cfg.hash())).at(&path)
}

fn prepare_output(cfg: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir).at(&cfg.output_dir)
}

fn load_signature<S: ByteSource>(cfg: &PipelineConfig, cube: &HyperCube<S>) -> Result<TargetSignature> {
    match &cfg.signature {
        Some(_) => {
            let p = cfg.require_path(&cfg.signature, "signature")?;
            let text = fs::read_to_string(p).at(p)?;
            load_target_signature(&text, cube.wavelengths()).at(p)
        }
        None => Ok(load_target_signature(SYNTHETIC_SIGNATURE, cube.wavelengths())?),
    }
}

/// Everything the SLF path derives on the way to its map.
#[derive(Debug, Clone)]
pub struct Enhancement {
    pub map: EnhancementMap,
    pub classes: Option<ClassMap>,
    pub stats: Option<ClassStats>,
    pub grouping: Option<SensorGrouping>,
    pub signature: TargetSignature,
}

/// Land cover, statistics and filtering over a cube already in hand.
pub fn compute_enhancement<S: ByteSource>(
    cfg: &PipelineConfig,
    cube: &HyperCube<S>,
    signature: TargetSignature,
    grouping: Option<SensorGrouping>,
) -> Result<Enhancement> {
    match cfg.filter {
        FilterKind::Traditional => {
            let map = matched_filter_traditional(cube, &signature, cfg.column_window, cfg.eps_scale)?;
            Ok(Enhancement {
                map,
                classes: None,
                stats: None,
                grouping: None,
                signature,
            })
        }
        FilterKind::Slf => {
            let labels = classify(&ndvi(cube)?, &ndwi(cube)?, cfg.water_threshold)?;
            let cm = merge_small_classes(&labels, cfg.min_pixels);
            let stats = class_stats(cube, &cm, cfg.eps_scale)?;
            let map = slf_enhance(cube, &cm, &stats, &signature, grouping.as_ref())?;
            Ok(Enhancement {
                map,
                classes: Some(cm),
                stats: Some(stats),
                grouping,
                signature,
            })
        }
    }
}

fn enhance_from_config(cfg: &PipelineConfig) -> Result<(Enhancement, usize)> {
    let cube_path = cfg.require_path(&cfg.cube, "cube")?;
    let cube = io::open_cube(cube_path)?;
    let signature = load_signature(cfg, &cube)?;
    let grouping = match (&cfg.glt, cfg.filter) {
        (Some(_), FilterKind::Slf) => {
            let p = cfg.require_path(&cfg.glt, "glt")?;
            Some(sensor_groups(&io::read_glt(p)?, cfg.sensor_window).at(p)?)
        }
        _ => None,
    };
    let e = compute_enhancement(cfg, &cube, signature, grouping).at(cube_path)?;
    Ok((e, cube.bands()))
}

fn affine_record(s: &AffineScale) -> AffineRecord {
    AffineRecord {
        lo: s.lo,
        hi: s.hi,
        gain: s.gain(),
        offset: s.offset(),
        no_data_rgb: NO_DATA_RGB,
    }
}

/// Writes the map, its PNG rendering and, for SLF, the class map and class
/// statistics.
pub fn cmd_enhance(cfg: &PipelineConfig) -> Result<EnhanceFile> {
    let (e, bands) = enhance_from_config(cfg)?;
    prepare_output(cfg)?;
    let prov = cfg.provenance();
    let filter = match cfg.filter {
        FilterKind::Slf => "slf",
        FilterKind::Traditional => "traditional",
    };
    let map_hdr = io::write_float_map(
        &out_path(cfg, "_enhancement"),
        &e.map,
        &format!("CH4 enhancement ({filter} filter)"),
        Some(&prov),
    )?;
    let scale = AffineScale::fit(&e.map);
    let png = out_path(cfg, "_enhancement.png");
    let fallback = AffineScale { lo: 0.0, hi: 0.0 };
    image::write_png(&png, &image::render_map(&e.map, scale.as_ref().unwrap_or(&fallback)), Some(&prov))?;
    if let (Some(cm), Some(stats)) = (&e.classes, &e.stats) {
        image::write_png(&out_path(cfg, "_classes.png"), &image::render_classes(cm), Some(&prov))?;
        sidecar::write_class_stats(&out_path(cfg, "_class_stats.bin"), stats, &prov)?;
    }
    let doc = EnhanceFile {
        schema: ENHANCE_SCHEMA.into(),
        config_hash: prov.config_hash.clone(),
        seed: prov.seed,
        filter: filter.into(),
        rows: e.map.rows,
        cols: e.map.cols,
        bands,
        n_classes: e.classes.as_ref().map(|c| c.num_classes()),
        class_counts: e.classes.as_ref().map(|c| c.counts.clone()),
        sensor_windows: e.grouping.as_ref().map(|g| g.num_windows),
        signature_provenance: e.signature.provenance.clone(),
        valid_pixels: e.map.valid_count(),
        png_scaling: scale.as_ref().map(affine_record),
        map: file_name(&map_hdr),
        png: file_name(&png),
    };
    write_json(&out_path(cfg, "_enhance.json"), &doc)?;
    write_timestamp(cfg, "enhance")?;
    Ok(doc)
}

pub fn cmd_tile(cfg: &PipelineConfig) -> Result<TilesFile> {
    let cube_path = cfg.require_path(&cfg.cube, "cube")?;
    let cube = io::open_cube(cube_path)?;
    let tiles = plan_tiles(cube.height(), cube.width(), cfg.tile_size, cfg.tile_overlap).at(cube_path)?;
    prepare_output(cfg)?;
    let prov = cfg.provenance();
    let doc = TilesFile {
        schema: TILES_SCHEMA.into(),
        config_hash: prov.config_hash,
        seed: prov.seed,
        rows: cube.height(),
        cols: cube.width(),
        size: cfg.tile_size,
        overlap: cfg.tile_overlap,
        tiles: tile_records(&tiles),
    };
    write_json(&out_path(cfg, "_tiles.json"), &doc)?;
    write_timestamp(cfg, "tile")?;
    Ok(doc)
}

fn tile_records(tiles: &[TileRect]) -> Vec<TileRecord> {
    tiles
        .iter()
        .enumerate()
        .map(|(index, t)| TileRecord {
            index,
            row0: t.row0,
            col0: t.col0,
            size: t.size,
        })
        .collect()
}

/// Bands the detector reads from a cube: the visible span feeding the RGB
/// composite and the SWIR window.
#[derive(Debug, Clone)]
pub struct DetectorBands {
    pub rgb: Range<usize>,
    pub swir: Range<usize>,
}

impl DetectorBands {
    pub fn of(wavelengths: &[f64]) -> Result<Self> {
        let w = rgb_weights(wavelengths)?;
        let idx = || w.iter().flat_map(|ch| ch.iter().map(|(b, _)| *b));
        let rgb = idx().min().unwrap_or(0)..idx().max().unwrap_or(0) + 1;
        let swir = select_bands_in(wavelengths, SWIR_NM.0, SWIR_NM.1)?.range();
        Ok(Self { rgb, swir })
    }
}

fn tensor_from_block(block: &methanemapper_core::hsi::Block) -> Tensor {
    let mut data = block.data.clone();
    for (v, ok) in data.iter_mut().zip(&block.valid) {
        if !ok {
            *v = 0.0;
        }
    }
    Tensor::from_vec(block.rows, block.cols, block.bands, data)
}

/// Network input for one tile: standardized RGB composite, standardized
/// SWIR bands and the raw enhancement values (zero where invalid).
pub fn tile_input<S: ByteSource>(
    cube: &HyperCube<S>,
    bands: &DetectorBands,
    enhancement: &MaskedGrid,
    tile: &TileRect,
) -> Result<TileInput> {
    let (rows, cols) = (tile.row0..tile.row0 + tile.size, tile.col0..tile.col0 + tile.size);
    let vis = cube.read_block(rows.clone(), cols.clone(), bands.rgb.clone())?;
    let rgb_img = compose_rgb_block(&vis, cube.wavelengths(), bands.rgb.start)?;
    let mut rgb = Tensor::from_vec(tile.size, tile.size, 3, rgb_img.data);
    standardize_channels(&mut rgb);
    let mut swir = tensor_from_block(&cube.read_block(rows, cols, bands.swir.clone())?);
    standardize_channels(&mut swir);
    let win = enhancement.window(tile.row0, tile.col0, tile.size, tile.size);
    let enh = win.values.iter().zip(&win.valid).map(|(v, ok)| if *ok { *v } else { 0.0 }).collect();
    Ok(TileInput {
        rgb,
        swir,
        enhancement: Tensor::from_vec(tile.size, tile.size, 1, enh),
    })
}

/// Per-pixel plume score of one tile: the largest heatmap value over
/// queries whose confidence clears the threshold, upsampled to the tile.
pub fn tile_scores(ds: &DetectionSet, size: usize, conf_threshold: f64) -> Vec<f64> {
    let mut out = vec![0.0f64; size * size];
    for (hm, conf) in ds.heatmaps.iter().zip(ds.confidence()) {
        if conf < conf_threshold {
            continue;
        }
        for y in 0..size {
            for x in 0..size {
                let v = hm.get(y / MASK_STRIDE, x / MASK_STRIDE, 0);
                let o = &mut out[y * size + x];
                *o = o.max(v);
            }
        }
    }
    out
}

/// Folds tile scores into an image in tile order, keeping the larger value
/// where tiles overlap.
pub fn fuse_max(rows: usize, cols: usize, tiles: &[TileRect], scores: &[Vec<f64>]) -> MaskedGrid {
    let mut grid = MaskedGrid::from_values(rows, cols, vec![0.0; rows * cols]);
    for (t, s) in tiles.iter().zip(scores) {
        for y in 0..t.size {
            for x in 0..t.size {
                let i = (t.row0 + y) * cols + t.col0 + x;
                grid.values[i] = grid.values[i].max(s[y * t.size + x]);
            }
        }
    }
    grid
}

fn image_box(b: [f64; 4], t: &TileRect, rows: usize, cols: usize) -> [f64; 4] {
    let s = t.size as f64;
    [
        (t.col0 as f64 + b[0] * s) / cols as f64,
        (t.row0 as f64 + b[1] * s) / rows as f64,
        b[2] * s / cols as f64,
        b[3] * s / rows as f64,
    ]
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| AppError::internal(format!("worker pool: {e}")))
}

/// Tiles the scene, runs the detector on every tile in parallel and fuses
/// the tile masks by per-pixel maximum.
pub fn cmd_detect(cfg: &PipelineConfig) -> Result<DetectionsFile> {
    let cube_path = cfg.require_path(&cfg.cube, "cube")?;
    let cube = io::open_cube(cube_path)?;
    let enhancement: MaskedGrid = match &cfg.enhancement {
        Some(_) => io::read_float_map(cfg.require_path(&cfg.enhancement, "enhancement")?)?,
        None => enhance_from_config(cfg)?.0.map.0,
    };
    let (rows, cols) = (cube.height(), cube.width());
    if (enhancement.rows, enhancement.cols) != (rows, cols) {
        return Err(AppError::user(format!(
            "enhancement map is {}x{}, cube is {rows}x{cols}",
            enhancement.rows, enhancement.cols
        )));
    }
    if !cfg.tile_size.is_multiple_of(DOWNSAMPLE) || cfg.tile_size > rows || cfg.tile_size > cols {
        return Err(CoreError::BadGeometry(format!(
            "tile size {} must be a multiple of {DOWNSAMPLE} and fit in {rows}x{cols}",
            cfg.tile_size
        ))
        .into());
    }
    let tiles = plan_tiles(rows, cols, cfg.tile_size, cfg.tile_overlap)?;
    let bands = DetectorBands::of(cube.wavelengths()).at(cube_path)?;
    let mut dcfg = cfg.detector.clone();
    dcfg.swir_channels = bands.swir.len();
    let mut det = Detector::new(dcfg.clone())?;
    if cfg.weights.is_some() {
        sidecar::read_weights(cfg.require_path(&cfg.weights, "weights")?, &mut det)?;
    }

    let pool = thread_pool(cfg.threads)?;
    let results: Vec<DetectionSet> = pool.install(|| {
        tiles
            .par_iter()
            .map(|t| -> Result<DetectionSet> {
                let input = tile_input(&cube, &bands, &enhancement, t)?;
                Ok(det.forward(&input)?)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let scores: Vec<Vec<f64>> = results
        .iter()
        .map(|ds| tile_scores(ds, cfg.tile_size, dcfg.conf_threshold))
        .collect();
    let fused = fuse_max(rows, cols, &tiles, &scores);
    let mask: Vec<bool> = fused.values.iter().map(|v| *v >= dcfg.mask_threshold).collect();

    let mut records = Vec::new();
    for (ti, (t, ds)) in tiles.iter().zip(&results).enumerate() {
        for (q, (b, conf)) in ds.boxes.iter().zip(ds.confidence()).enumerate() {
            records.push(DetectionRecord {
                tile: ti,
                query: q,
                bbox: *b,
                bbox_image: image_box(*b, t, rows, cols),
                score: conf,
                kept: conf >= dcfg.conf_threshold,
            });
        }
    }
    let prov = cfg.provenance();
    prepare_output(cfg)?;
    let mask_png = out_path(cfg, "_mask.png");
    image::write_png(&mask_png, &image::render_binary(rows, cols, &mask), Some(&prov))?;
    let scores_hdr = io::write_float_map(&out_path(cfg, "_scores"), &fused, "fused plume score", Some(&prov))?;
    let pred_path = cfg.output_dir.join("pred").join(format!("{}.json", cfg.name));
    let predictions = PredictionFile {
        schema: PREDICTIONS_SCHEMA.into(),
        config_hash: prov.config_hash.clone(),
        seed: prov.seed,
        rows,
        cols,
        detections: records
            .iter()
            .filter(|r| r.kept)
            .map(|r| PredictionRecord {
                class: None,
                bbox: r.bbox_image,
                score: r.score,
            })
            .collect(),
        mask_rle: encode_rle(&mask),
    };
    write_json(&pred_path, &predictions)?;
    let doc = DetectionsFile {
        schema: DETECTIONS_SCHEMA.into(),
        config_hash: prov.config_hash,
        seed: prov.seed,
        rows,
        cols,
        tiles: tile_records(&tiles),
        n_kept: predictions.detections.len(),
        records,
        mask: file_name(&mask_png),
        scores: file_name(&scores_hdr),
        predictions: format!("pred/{}.json", cfg.name),
    };
    write_json(&out_path(cfg, "_detections.json"), &doc)?;
    write_timestamp(cfg, "detect")?;
    Ok(doc)
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .at(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    out.sort();
    Ok(out)
}

/// Scores prediction files against annotation files of the same name.
pub fn cmd_eval(cfg: &PipelineConfig) -> Result<MetricsFile> {
    let gt_dir = cfg.require_path(&cfg.gt_dir, "gt_dir")?;
    let pred_dir = cfg.require_path(&cfg.pred_dir, "pred_dir")?;
    let mut images = Vec::new();
    for gt_path in json_files(gt_dir)? {
        let gt: AnnotationFile = read_json(&gt_path, ANNOTATIONS_SCHEMA)?;
        let pred_path = pred_dir.join(gt_path.file_name().expect("listed file"));
        if !pred_path.is_file() {
            return Err(AppError::user(format!("no predictions for {}", gt_path.display())));
        }
        let pred: PredictionFile = read_json(&pred_path, PREDICTIONS_SCHEMA)?;
        if (pred.rows, pred.cols) != (gt.rows, gt.cols) {
            return Err(AppError::user(format!(
                "{}: predictions are {}x{}, annotations {}x{}",
                pred_path.display(),
                pred.rows,
                pred.cols,
                gt.rows,
                gt.cols
            )));
        }
        images.push((gt, pred));
    }
    let report = evaluate(&images, cfg.iou_threshold)?;
    let prov = cfg.provenance();
    let doc = MetricsFile {
        schema: METRICS_SCHEMA.into(),
        config_hash: prov.config_hash,
        seed: prov.seed,
        ..report
    };
    prepare_output(cfg)?;
    write_json(&out_path(cfg, "_metrics.json"), &doc)?;
    write_timestamp(cfg, "eval")?;
    Ok(doc)
}

/// mAP and mIOU over paired documents. When any detection lacks a class
/// the evaluation is class-agnostic: every annotation counts as one plume
/// class.
pub fn evaluate(images: &[(AnnotationFile, PredictionFile)], iou_threshold: f64) -> Result<MetricsFile> {
    let agnostic = images.iter().any(|(_, p)| p.detections.iter().any(|d| d.class.is_none()));
    let collapse = |c: PlumeClass| if agnostic { PlumeClass::PointSource } else { c };
    let (mut dets, mut gts) = (Vec::new(), Vec::new());
    let (mut iou_sum, mut n_inst) = (0.0, 0usize);
    for (image, (gt, pred)) in images.iter().enumerate() {
        let mut gt_masks = Vec::new();
        for inst in &gt.instances {
            let class = collapse(parse_class(&inst.class)?);
            gts.push(LabeledBox {
                image,
                class,
                bbox: inst.bbox,
            });
            gt_masks.push(decode_rle(&inst.mask_rle, gt.rows, gt.cols)?);
        }
        for d in &pred.detections {
            let class = match &d.class {
                Some(c) => collapse(parse_class(c)?),
                None => PlumeClass::PointSource,
            };
            dets.push(ScoredBox {
                image,
                class,
                bbox: d.bbox,
                score: d.score,
            });
        }
        if !gt_masks.is_empty() {
            let pm = decode_rle(&pred.mask_rle, pred.rows, pred.cols)?;
            iou_sum += miou(&[pm], &gt_masks)? * gt_masks.len() as f64;
            n_inst += gt_masks.len();
        }
    }
    if n_inst == 0 {
        return Err(CoreError::EmptyGroundTruth.into());
    }
    let report = map_at_iou(&dets, &gts, iou_threshold)?;
    Ok(MetricsFile {
        schema: METRICS_SCHEMA.into(),
        config_hash: String::new(),
        seed: 0,
        map_50: report.map,
        miou: iou_sum / n_inst as f64,
        per_class_ap: report
            .per_class
            .iter()
            .map(|(c, ap)| (if agnostic { "plume".to_string() } else { c.name().to_string() }, *ap))
            .collect(),
        n_images: images.len(),
        iou_threshold,
        class_agnostic: agnostic,
    })
}

pub fn parse_source(s: &str) -> Result<PlumeClass> {
    match s {
        "point" | "point_source" => Ok(PlumeClass::PointSource),
        "diffused" | "diffused_source" => Ok(PlumeClass::DiffusedSource),
        other => Err(AppError::user(format!("unknown source type `{other}`"))),
    }
}

fn concentration_from(grid: &MaskedGrid, path: &Path) -> Result<ConcentrationLayer> {
    let values = grid.values.iter().zip(&grid.valid).map(|(v, ok)| if *ok { *v } else { 0.0 }).collect();
    ConcentrationLayer::new(grid.rows, grid.cols, values).at(path)
}

/// Places annotation patches on the flightline grid and writes the colour
/// mask, the concentration map and an annotation document for `eval`.
pub fn cmd_annotate_map(cfg: &PipelineConfig) -> Result<AnnotationFile> {
    let loc_path = cfg.require_path(&cfg.locations, "locations")?;
    let list_path = cfg.require_path(&cfg.annotations, "annotations")?;
    let geo = io::read_locations(loc_path)?;
    let list: PatchList = read_json(list_path, PATCHES_SCHEMA)?;
    let base = list_path.parent().unwrap_or(Path::new("."));
    let (rows, cols) = (geo.rows, geo.cols);
    let mut layers = Vec::new();
    let mut fits = Vec::new();
    for (i, rec) in list.patches.iter().enumerate() {
        let hdr = base.join(&rec.concentration);
        let patch = AnnotationPatch {
            concentration: concentration_from(&io::read_float_map(&hdr)?, &hdr)?,
            corners: rec.corners.map(|[lon, lat]| (lon, lat)),
            source: parse_source(&rec.source)?,
        };
        let (layer, fit) = map_annotation(&patch, &geo).map_err(|e| AppError::from(e).at(&hdr))?;
        if layer.nonzero() == 0 {
            eprintln!("warning: patch {i} does not overlap the flightline");
        }
        fits.push(serde_json::json!({ "patch": i, "rms_px": fit.rms, "homography": fit.h.m }));
        layers.push((layer, patch.source));
    }
    let refs: Vec<(&ConcentrationLayer, PlumeClass)> = layers.iter().map(|(l, s)| (l, *s)).collect();
    let rgb = if refs.is_empty() {
        methanemapper_core::annotate::RgbMask::black(rows, cols)
    } else {
        composite(&refs)?
    };
    let mut conc = MaskedGrid::from_values(rows, cols, vec![0.0; rows * cols]);
    for (l, _) in &layers {
        for (o, v) in conc.values.iter_mut().zip(&l.values) {
            *o = o.max(*v);
        }
    }
    let instances = layers
        .iter()
        .filter_map(|(l, s)| {
            let m = l.support();
            crate::records::support_box(&m).map(|bbox| InstanceRecord {
                class: s.name().into(),
                bbox,
                mask_rle: encode_rle(&m.data),
            })
        })
        .collect();
    let prov = cfg.provenance();
    prepare_output(cfg)?;
    image::write_png(&out_path(cfg, "_annotation.png"), &image::render_rgb_mask(&rgb), Some(&prov))?;
    io::write_float_map(&out_path(cfg, "_concentration"), &conc, "annotated CH4 concentration", Some(&prov))?;
    write_json(
        &out_path(cfg, "_annotate.json"),
        &serde_json::json!({
            "schema": "methanemapper.annotate/1",
            "config_hash": prov.config_hash,
            "seed": prov.seed,
            "fits": fits,
        }),
    )?;
    let doc = AnnotationFile {
        schema: ANNOTATIONS_SCHEMA.into(),
        config_hash: prov.config_hash.clone(),
        seed: prov.seed,
        rows,
        cols,
        instances,
    };
    write_json(&cfg.output_dir.join("gt").join(format!("{}.json", cfg.name)), &doc)?;
    write_timestamp(cfg, "annotate-map")?;
    Ok(doc)
}

/// Renders a float map with affine gray scaling; the scaling goes to a
/// text sidecar next to the image.
pub fn cmd_plot(cfg: &PipelineConfig) -> Result<PlotFile> {
    let input = cfg.require_path(&cfg.input, "input")?;
    let grid = io::read_float_map(input)?;
    let scale = AffineScale::fit(&grid);
    let prov = cfg.provenance();
    prepare_output(cfg)?;
    let fallback = AffineScale { lo: 0.0, hi: 0.0 };
    image::write_png(
        &out_path(cfg, "_plot.png"),
        &image::render_map(&grid, scale.as_ref().unwrap_or(&fallback)),
        Some(&prov),
    )?;
    let mut text = format!("# byte = clamp(round(gain * value + offset), 0, 255)\nconfig_hash {}\nseed {}\n", prov.config_hash, prov.seed);
    if let Some(s) = &scale {
        text.push_str(&format!("min {}\nmax {}\ngain {}\noffset {}\n", s.lo, s.hi, s.gain(), s.offset()));
    }
    text.push_str(&format!("no_data_rgb {} {} {}\n", NO_DATA_RGB[0], NO_DATA_RGB[1], NO_DATA_RGB[2]));
    let side = out_path(cfg, "_plot.txt");
    fs::write(&side, text).at(&side)?;
    write_timestamp(cfg, "plot")?;
    Ok(PlotFile {
        schema: PLOT_SCHEMA.into(),
        config_hash: prov.config_hash,
        seed: prov.seed,
        input: input.display().to_string(),
        scaling: scale.as_ref().map(affine_record),
    })
}

pub fn scene_spec(cfg: &PipelineConfig) -> SceneSpec {
    SceneSpec {
        rows: cfg.synth.rows,
        cols: cfg.synth.cols,
        bands: cfg.synth.bands,
        plume_amplitude: cfg.synth.plume_amplitude,
        plume_radius: cfg.synth.plume_radius,
        seed: cfg.seed,
    }
}

/// Writes a synthetic scene: cube, lookup table, location grid, the
/// signature table, the plume annotation and one annotation patch over the
/// plume.
pub fn cmd_synth(cfg: &PipelineConfig) -> Result<serde_json::Value> {
    let scene = synth::generate(&scene_spec(cfg))?;
    let prov = cfg.provenance();
    prepare_output(cfg)?;
    let (rows, cols, bands) = (scene.spec.rows, scene.spec.cols, scene.spec.bands);
    let cube = io::write_raster(
        &out_path(cfg, ""),
        &RasterSpec {
            rows,
            cols,
            bands,
            data_type: DataType::Float32,
            no_data: Some(methanemapper_core::hsi::DEFAULT_NO_DATA),
            wavelengths: Some(&scene.wavelengths),
            band_names: &[],
            description: "synthetic radiance",
        },
        &scene.samples,
        Some(&prov),
    )?;
    let glt_samples: Vec<f64> = (0..rows * cols)
        .flat_map(|i| [scene.glt.orig_col[i] as f64, scene.glt.orig_row[i] as f64])
        .collect();
    let glt = io::write_raster(
        &out_path(cfg, "_glt"),
        &RasterSpec {
            rows,
            cols,
            bands: 2,
            data_type: DataType::Int32,
            no_data: None,
            wavelengths: None,
            band_names: &["sensor column", "sensor row"],
            description: "geometric lookup table",
        },
        &glt_samples,
        Some(&prov),
    )?;
    let loc_samples: Vec<f64> = (0..rows * cols).flat_map(|i| [scene.geo.lon[i], scene.geo.lat[i]]).collect();
    let loc = io::write_raster(
        &out_path(cfg, "_loc"),
        &RasterSpec {
            rows,
            cols,
            bands: 2,
            data_type: DataType::Float64,
            no_data: None,
            wavelengths: None,
            band_names: &["longitude", "latitude"],
            description: "pixel locations",
        },
        &loc_samples,
        Some(&prov),
    )?;
    let sig = cfg.output_dir.join("ch4_signature.txt");
    fs::write(&sig, SYNTHETIC_SIGNATURE).at(&sig)?;

    let gt = AnnotationFile {
        schema: ANNOTATIONS_SCHEMA.into(),
        config_hash: prov.config_hash.clone(),
        seed: prov.seed,
        rows,
        cols,
        instances: crate::records::support_box(&scene.plume)
            .map(|bbox| InstanceRecord {
                class: PlumeClass::PointSource.name().into(),
                bbox,
                mask_rle: encode_rle(&scene.plume.data),
            })
            .into_iter()
            .collect(),
    };
    write_json(&cfg.output_dir.join("gt").join(format!("{}.json", cfg.name)), &gt)?;

    // a square patch centred on the plume, one patch pixel per scene pixel
    let (pr, pc) = synth::plume_center(rows, cols);
    let half = (scene.spec.plume_radius.ceil() as usize + 2).min(pr as usize).min(pc as usize);
    let (r0, c0, n) = (pr as usize - half, pc as usize - half, 2 * half);
    let mut patch = MaskedGrid::from_values(n, n, vec![0.0; n * n]);
    for r in 0..n {
        for c in 0..n {
            if r0 + r < rows && c0 + c < cols && scene.plume.get(r0 + r, c0 + c) {
                patch.values[r * n + c] = 100.0 * scene.spec.plume_amplitude;
            }
        }
    }
    let (last_r, last_c) = ((r0 + n - 1).min(rows - 1), (c0 + n - 1).min(cols - 1));
    let patches_dir = cfg.output_dir.join("patches");
    io::write_float_map(&patches_dir.join("patch0"), &patch, "synthetic concentration patch", Some(&prov))?;
    let ll = |r: usize, c: usize| [synth::lon_of(c), synth::lat_of(r)];
    let list = PatchList {
        schema: PATCHES_SCHEMA.into(),
        patches: vec![PatchRecord {
            concentration: "patch0.hdr".into(),
            corners: [ll(r0, c0), ll(r0, last_c), ll(last_r, last_c), ll(last_r, c0)],
            source: "point".into(),
        }],
    };
    write_json(&patches_dir.join("patches.json"), &list)?;

    let doc = serde_json::json!({
        "schema": SYNTH_SCHEMA,
        "config_hash": prov.config_hash,
        "seed": prov.seed,
        "rows": rows,
        "cols": cols,
        "bands": bands,
        "plume_pixels": scene.plume.count(),
        "plume_amplitude": scene.spec.plume_amplitude,
        "cube": file_name(&cube),
        "glt": file_name(&glt),
        "locations": file_name(&loc),
        "signature": file_name(&sig),
        "patches": "patches/patches.json",
        "ground_truth": format!("gt/{}.json", cfg.name),
    });
    write_json(&out_path(cfg, "_synth.json"), &doc)?;
    write_timestamp(cfg, "synth")?;
    Ok(doc)
}

