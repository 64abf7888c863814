use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use divetrack::appearance::{extract_batch, load_image, ImageCrop, RgbImage};
use divetrack::config::ConfigOverrides;
use divetrack::io::{
    load_detections, load_features, load_labeled, write_features, write_tracks, DetectionSet,
};
use divetrack::metrics::{evaluate, validate_iou_min, DEFAULT_IOU_MIN};
use divetrack::pipeline::{run, run_with, EmitMode, RunOutput};
use divetrack::simulate::{builtin, builtin_scenarios, frame_image_name, generate, ScenarioConfig};
use divetrack::tracker::MergeEvent;
use divetrack::{parallel, FrameIndex, TrackerConfig};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "divetrack",
    version,
    about = "Multi-diver tracking with appearance-based reidentification"
)]
struct Cli {
    /// Worker threads for feature extraction (0 = one per CPU)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Track detections and write MOT-format results
    Track(TrackArgs),
    /// Score a result file against ground truth
    Eval(EvalArgs),
    /// Write a synthetic scenario (detections, features, ground truth)
    Simulate(SimulateArgs),
    /// Extract appearance features for detections from frame images
    Features(FeaturesArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Emit {
    /// Only tracks that were confirmed at some point
    Confirmed,
    /// Every track, including ones that never confirmed
    Tentative,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("appearance").required(true).args(["features", "images"])))]
struct TrackArgs {
    #[arg(long, value_name = "PATH")]
    detections: PathBuf,
    /// Feature sidecar, one row per detection row
    #[arg(long, value_name = "PATH")]
    features: Option<PathBuf>,
    /// Directory of frame images named 000001.ppm, 000002.ppm, ...
    #[arg(long, value_name = "DIR")]
    images: Option<PathBuf>,
    /// Tracker settings as `key = value` lines
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Emit::Confirmed)]
    emit: Emit,
    /// Write frames as they were emitted, without rewriting merged ids
    #[arg(long)]
    streaming: bool,
    #[arg(long)]
    no_identity_recovery: bool,
    /// Write a JSON run manifest with per-frame timings and merges
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    overrides: OverrideArgs,
}

/// Per-setting overrides, applied on top of the config file.
#[derive(Args, Debug, Default)]
struct OverrideArgs {
    #[arg(long)]
    iou_threshold: Option<f64>,
    #[arg(long)]
    location_gate: Option<f64>,
    #[arg(long)]
    appearance_gate_short: Option<f64>,
    #[arg(long)]
    appearance_gate_long: Option<f64>,
    #[arg(long)]
    long_term_after: Option<u32>,
    #[arg(long)]
    gallery_capacity: Option<usize>,
    #[arg(long)]
    confirm_after: Option<u32>,
    #[arg(long)]
    new_track_window: Option<u32>,
    #[arg(long)]
    merge_fraction: Option<f64>,
}

impl OverrideArgs {
    fn to_overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            iou_threshold: self.iou_threshold,
            location_gate: self.location_gate,
            appearance_gate_short: self.appearance_gate_short,
            appearance_gate_long: self.appearance_gate_long,
            long_term_after: self.long_term_after,
            gallery_capacity: self.gallery_capacity,
            confirm_after: self.confirm_after,
            new_track_window: self.new_track_window,
            merge_fraction: self.merge_fraction,
            ..ConfigOverrides::default()
        }
    }
}

fn parse_iou_min(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    validate_iou_min(v).map_err(|e| e.to_string())?;
    Ok(v)
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    gt: PathBuf,
    #[arg(long, value_name = "PATH")]
    result: PathBuf,
    /// Minimum IOU for a predicted box to cover a ground-truth box
    #[arg(long, default_value_t = DEFAULT_IOU_MIN, value_parser = parse_iou_min)]
    iou_min: f64,
    /// Also write `NAME=value` lines to this file
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["scenario", "config", "list"])))]
struct SimulateArgs {
    /// Builtin scenario name
    #[arg(long)]
    scenario: Option<String>,
    /// Scenario description file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Print the builtin scenario names and exit
    #[arg(long)]
    list: bool,
    /// Overrides the scenario's seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR", required_unless_present = "list")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    #[arg(long, value_name = "PATH")]
    detections: PathBuf,
    #[arg(long, value_name = "DIR")]
    images: PathBuf,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

/// Failure that should exit with the usage status.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = parallel::set_threads(cli.threads) {
        eprintln!("error: cannot size worker pool: {e}");
        return ExitCode::from(1);
    }
    let result = match &cli.command {
        Command::Track(args) => cmd_track(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Features(args) => cmd_features(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn tracker_config(args: &TrackArgs) -> Result<TrackerConfig> {
    let mut config = TrackerConfig::default();
    if let Some(path) = &args.config {
        ConfigOverrides::from_file(path)?.apply(&mut config);
    }
    args.overrides.to_overrides().apply(&mut config);
    if args.no_identity_recovery {
        config.identity_recovery_enabled = false;
    }
    config.validate()?;
    Ok(config)
}

fn frame_image(dir: &Path, frame: FrameIndex) -> Result<RgbImage> {
    let path = dir.join(frame_image_name(frame));
    if !path.is_file() {
        bail!("missing image for frame {frame}: {}", path.display());
    }
    Ok(load_image(&path)?)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tracker_version: &'a str,
    parallel: bool,
    detections: &'a Path,
    features: Option<&'a Path>,
    images: Option<&'a Path>,
    config_file: Option<&'a Path>,
    config: &'a TrackerConfig,
    emit: &'a str,
    streaming: bool,
    frames: usize,
    mean_frame_ms: f64,
    frame_ms: &'a [f64],
    merges: &'a [MergeEvent],
}

fn cmd_track(args: &TrackArgs) -> Result<()> {
    let config = tracker_config(args)?;
    let detections = load_detections(&args.detections)?;
    let output: RunOutput = if let Some(features) = &args.features {
        let detections = load_features(features, detections)?;
        run(config.clone(), &detections)?
    } else {
        let dir = args
            .images
            .as_deref()
            .expect("clap requires features or images");
        let last = detections.last_frame().unwrap_or(0);
        run_with(config.clone(), last, |frame| {
            let dets = detections.frame(frame);
            if dets.is_empty() {
                return Ok(Vec::new());
            }
            let img =
                frame_image(dir, frame).map_err(|e| divetrack::Error::Image(format!("{e:#}")))?;
            dets.iter()
                .map(|d| {
                    Ok(d.clone()
                        .with_crop(Arc::new(ImageCrop::from_region(&img, &d.bbox)?)))
                })
                .collect()
        })?
    };
    let mode = match args.emit {
        Emit::Confirmed => EmitMode::Confirmed,
        Emit::Tentative => EmitMode::Tentative,
    };
    let records = if args.streaming {
        output.streaming_records(mode)
    } else {
        output.batch_records(mode)
    };
    write_tracks(&args.out, &records)?;
    if let Some(path) = &args.manifest {
        let manifest = RunManifest {
            tracker_version: divetrack::VERSION,
            parallel: parallel::is_parallel(),
            detections: &args.detections,
            features: args.features.as_deref(),
            images: args.images.as_deref(),
            config_file: args.config.as_deref(),
            config: &config,
            emit: match args.emit {
                Emit::Confirmed => "confirmed",
                Emit::Tentative => "tentative",
            },
            streaming: args.streaming,
            frames: output.step_ms.len(),
            mean_frame_ms: output.mean_step_ms(),
            frame_ms: &output.step_ms,
            merges: &output.merges,
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let gt = load_labeled(&args.gt)?;
    let result = load_labeled(&args.result)?;
    let report = evaluate(&gt, &result, args.iou_min)?;
    print!("{}", report.table());
    print!("{}", report.key_values());
    if let Some(path) = &args.out {
        fs::write(path, report.key_values())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn scenario_names() -> String {
    builtin_scenarios()
        .iter()
        .map(|s| s.name.clone())
        .collect::<Vec<_>>()
        .join(", ")
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    if args.list {
        for s in builtin_scenarios() {
            println!("{}", s.name);
        }
        return Ok(());
    }
    let mut scenario: ScenarioConfig = match (&args.scenario, &args.config) {
        (Some(name), _) => builtin(name).ok_or_else(|| {
            anyhow!(UsageError(format!(
                "unknown scenario `{name}`; available: {}",
                scenario_names()
            )))
        })?,
        (None, Some(path)) => ScenarioConfig::from_file(path)?,
        (None, None) => unreachable!("clap requires a source"),
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let out = args.out.as_deref().expect("clap requires --out");
    let files = generate(&scenario, out)?;
    println!("{}", files.detections.display());
    println!("{}", files.features.display());
    println!("{}", files.ground_truth.display());
    if let Some(images) = files.images {
        println!("{}", images.display());
    }
    Ok(())
}

fn cmd_features(args: &FeaturesArgs) -> Result<()> {
    let detections: DetectionSet = load_detections(&args.detections)?;
    let mut features = Vec::with_capacity(detections.len());
    for (&frame, dets) in &detections.by_frame {
        let img = frame_image(&args.images, frame)?;
        let crops = dets
            .iter()
            .map(|d| ImageCrop::from_region(&img, &d.bbox))
            .collect::<divetrack::Result<Vec<_>>>()?;
        let refs: Vec<&ImageCrop> = crops.iter().collect();
        features.push(extract_batch(&refs));
    }
    // back to file row order
    let frames: Vec<FrameIndex> = detections.by_frame.keys().copied().collect();
    let rows = detections.row_order.iter().map(|&(frame, i)| {
        let k = frames.binary_search(&frame).expect("row frame is present");
        &features[k][i]
    });
    write_features(&args.out, rows)?;
    Ok(())
}
