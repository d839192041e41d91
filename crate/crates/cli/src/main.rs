use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use evmod_core::pipeline::{run_detect, run_suite, Method, PipelineConfig};
use evmod_core::synth::{generate, parse_scene, standard_suite, write_scene};

/// Detect independently moving objects in event-camera recordings.
#[derive(Parser)]
#[command(name = "evmod", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run detection on event, IMU and intrinsics files.
    Detect(DetectArgs),
    /// Run every method on the synthetic scene suite and print the table.
    Suite(SuiteArgs),
    /// Write a synthetic scene (events, IMU, intrinsics, ground truth) to disk.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    imu: PathBuf,
    #[arg(long)]
    intrinsics: PathBuf,
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Key=value configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    debug_dir: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// Name of a standard scene, or a key=value scene file.
    #[arg(long, conflicts_with = "scene_file")]
    scene: Option<String>,
    #[arg(long)]
    scene_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.02)]
    dt: f64,
    #[arg(long)]
    out: PathBuf,
}

fn load_config(path: Option<&PathBuf>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(PipelineConfig::default()),
    }
}

fn detect(args: DetectArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_ref())?;
    cfg.paths.events = Some(args.events);
    cfg.paths.imu = Some(args.imu);
    cfg.paths.intrinsics = Some(args.intrinsics);
    if args.gt.is_some() {
        cfg.paths.ground_truth = args.gt;
    }
    if args.out.is_some() {
        cfg.paths.out = args.out;
    }
    if args.debug_dir.is_some() {
        cfg.paths.debug_dir = args.debug_dir;
    }
    if let Some(m) = args.method {
        cfg.method = m;
    }
    let outcome = run_detect(&cfg)?;
    let n: usize = outcome.windows.iter().map(|w| w.detections.len()).sum();
    println!(
        "{} windows, {n} detections ({})",
        outcome.windows.len(),
        cfg.method.as_str()
    );
    if let Some(s) = &outcome.score {
        println!("mean_iou={:.4} accuracy={:.4}", s.mean_iou, s.accuracy);
    }
    Ok(())
}

fn suite(args: SuiteArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_ref())?;
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    let report = run_suite(&cfg, args.out.as_deref())?;
    print!("{}", report.to_text());
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = match (&args.scene, &args.scene_file) {
        (_, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_scene(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (Some(name), None) => standard_suite()
            .into_iter()
            .find(|s| &s.name == name)
            .with_context(|| format!("no standard scene named {name:?}"))?,
        (None, None) => anyhow::bail!("give --scene NAME or --scene-file PATH"),
    };
    let out = generate(&spec, args.dt)?;
    write_scene(&out, &args.out)?;
    println!(
        "{}: {} events, {} IMU samples, {} boxes -> {}",
        spec.name,
        out.events.len(),
        out.imu.len(),
        out.ground_truth.len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Detect(a) => detect(a),
        Command::Suite(a) => suite(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
