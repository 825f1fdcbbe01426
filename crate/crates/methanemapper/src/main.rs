use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use methanemapper::config::parse_override;
use methanemapper::{pipeline, AppError, PipelineConfig};
use serde::Serialize;

/// Methane plume mapping for imaging-spectrometer flightlines.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override one configuration key; repeatable, applied after the file.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Output directory (`output_dir`).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    /// Seed recorded with every artifact (`seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CubeArg {
    /// ENVI header of the radiance cube (`cube`).
    #[arg(long)]
    cube: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Land cover, class statistics and the matched filter.
    Enhance {
        #[command(flatten)]
        cube: CubeArg,
        /// `slf` or `traditional` (`filter`).
        #[arg(long)]
        filter: Option<String>,
        /// Geometric lookup table header (`glt`).
        #[arg(long)]
        glt: Option<PathBuf>,
        /// Target signature table (`signature`).
        #[arg(long)]
        signature: Option<PathBuf>,
    },
    /// Tiled detector forward pass with mask fusion.
    Detect {
        #[command(flatten)]
        cube: CubeArg,
        /// Precomputed enhancement map header (`enhancement`).
        #[arg(long)]
        enhancement: Option<PathBuf>,
        /// Weights file stem (`weights`).
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// mAP and mIOU of predictions against annotations.
    Eval {
        /// Directory of prediction documents (`pred_dir`).
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Directory of annotation documents (`gt_dir`).
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Tile plan of a cube.
    Tile {
        #[command(flatten)]
        cube: CubeArg,
    },
    /// Map annotation patches onto a flightline.
    AnnotateMap {
        /// Location grid header (`locations`).
        #[arg(long)]
        locations: Option<PathBuf>,
        /// Patch list document (`annotations`).
        #[arg(long)]
        patches: Option<PathBuf>,
    },
    /// Render a float map to PNG.
    Plot {
        /// Float map header (`input`).
        input: Option<PathBuf>,
    },
    /// Write a seeded synthetic scene.
    Synth,
}

fn push(pairs: &mut Vec<(String, String)>, key: &str, v: Option<impl ToString>) {
    if let Some(v) = v {
        pairs.push((key.to_string(), v.to_string()));
    }
}

fn path_str(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.display().to_string())
}

fn emit<T: Serialize>(doc: &T) -> Result<(), AppError> {
    let text = serde_json::to_string_pretty(doc).map_err(|e| AppError::internal(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), AppError> {
    let mut pairs = Vec::new();
    for s in &cli.set {
        pairs.push(parse_override(s)?);
    }
    push(&mut pairs, "output_dir", path_str(cli.out));
    push(&mut pairs, "seed", cli.seed);
    match &cli.command {
        Command::Enhance { cube, filter, glt, signature } => {
            push(&mut pairs, "cube", path_str(cube.cube.clone()));
            push(&mut pairs, "filter", filter.clone());
            push(&mut pairs, "glt", path_str(glt.clone()));
            push(&mut pairs, "signature", path_str(signature.clone()));
        }
        Command::Detect { cube, enhancement, weights } => {
            push(&mut pairs, "cube", path_str(cube.cube.clone()));
            push(&mut pairs, "enhancement", path_str(enhancement.clone()));
            push(&mut pairs, "weights", path_str(weights.clone()));
        }
        Command::Eval { pred, gt } => {
            push(&mut pairs, "pred_dir", path_str(pred.clone()));
            push(&mut pairs, "gt_dir", path_str(gt.clone()));
        }
        Command::Tile { cube } => push(&mut pairs, "cube", path_str(cube.cube.clone())),
        Command::AnnotateMap { locations, patches } => {
            push(&mut pairs, "locations", path_str(locations.clone()));
            push(&mut pairs, "annotations", path_str(patches.clone()));
        }
        Command::Plot { input } => push(&mut pairs, "input", path_str(input.clone())),
        Command::Synth => {}
    }
    let cfg = PipelineConfig::load(cli.config.as_deref(), &pairs)?;
    match cli.command {
        Command::Enhance { .. } => emit(&pipeline::cmd_enhance(&cfg)?),
        Command::Detect { .. } => {
            let doc = pipeline::cmd_detect(&cfg)?;
            emit(&serde_json::json!({
                "schema": doc.schema,
                "tiles": doc.tiles.len(),
                "records": doc.records.len(),
                "kept": doc.n_kept,
                "mask": doc.mask,
            }))
        }
        Command::Eval { .. } => emit(&pipeline::cmd_eval(&cfg)?),
        Command::Tile { .. } => emit(&pipeline::cmd_tile(&cfg)?),
        Command::AnnotateMap { .. } => {
            let doc = pipeline::cmd_annotate_map(&cfg)?;
            emit(&serde_json::json!({ "schema": doc.schema, "instances": doc.instances.len() }))
        }
        Command::Plot { .. } => emit(&pipeline::cmd_plot(&cfg)?),
        Command::Synth => emit(&pipeline::cmd_synth(&cfg)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
