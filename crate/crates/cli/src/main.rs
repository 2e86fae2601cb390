//! `pose-forge` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (unreadable or invalid
//! inputs, failed self-test, I/O failure).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use pose_forge::augment::{augment_scene, SceneAugmentConfig};
use pose_forge::bop_io::{read_scene, scene_dirs, validate_dataset, write_scene, ReadOptions};
use pose_forge::losses::selftest;
use pose_forge::mesh::{sample_points, shapes};
use pose_forge::metrics::{render_table, MatchConfig, MetricKind, PointSource};
use pose_forge::postprocess::{
    evaluate_inputs, load_evaluation_inputs, timed_evaluate, to_timed_images, EvalConfig, EvaluationInputs, NoopObserver,
    DEFAULT_NMS_IOU,
};
use pose_forge::scenegen::{generate_dataset, SceneConfig};

#[derive(Debug, Parser)]
#[command(name = "pose-forge", version, about = "6D pose dataset generation, validation and evaluation")]
struct Cli {
    /// Output format of reports.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "POSE_FORGE_JOBS", default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic BOP dataset from a TOML scene configuration.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configuration's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a BOP dataset, split or scene and list every violation.
    Validate { dataset: PathBuf },
    /// Score a BOP results CSV against a dataset's ground truth.
    Evaluate {
        #[command(flatten)]
        eval: EvalArgs,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Augment every scene of a dataset (images, masks, depth and poses).
    Augment {
        dataset: PathBuf,
        /// Restrict to one split directory.
        #[arg(long)]
        split: Option<String>,
        /// Write an augmented copy here instead of replacing the originals.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TOML file with `[geometric]` and `[color]` ranges.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Loss utilities.
    Losses {
        #[command(subcommand)]
        command: LossCommand,
    },
    /// Time NMS and the decode + scoring pipeline per image.
    Bench {
        #[command(flatten)]
        eval: EvalArgs,
        /// IoU above which lower-scored boxes of the same object are suppressed.
        #[arg(long, default_value_t = DEFAULT_NMS_IOU, value_parser = parse_iou)]
        nms_iou: f64,
    },
}

#[derive(Debug, Subcommand)]
enum LossCommand {
    /// Finite-difference gradient checks and zero-at-ground-truth checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Model points used by the ADD-S losses.
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
        points: u64,
        /// Random configurations per loss.
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        configurations: u64,
    },
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Dataset root (with `models/` and `camera.json`), split or scene.
    #[arg(long)]
    dataset: PathBuf,
    /// BOP results CSV.
    #[arg(long)]
    results: PathBuf,
    /// Model directory; defaults to `<dataset>/models`.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Restrict to one split directory under the dataset.
    #[arg(long)]
    split: Option<String>,
    /// Diameter fractions, strictly increasing, each in (0, 1].
    #[arg(long, value_parser = parse_thresholds, default_value = "0.1,0.2,0.3,0.4,0.5")]
    thresholds: Thresholds,
    /// Surface points sampled per model.
    #[arg(long, default_value_t = 2048, value_parser = clap::value_parser!(u64).range(1..))]
    points: u64,
    /// Seed of the surface sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Metric::AddS)]
    metric: Metric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    #[value(name = "add-s")]
    AddS,
    Add,
}

#[derive(Debug, Clone, PartialEq)]
struct Thresholds(Vec<f64>);

fn parse_thresholds(s: &str) -> Result<Thresholds, String> {
    let values =
        s.split(',').map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"))).collect::<Result<Vec<_>, _>>()?;
    pose_forge::metrics::validate_fractions(&values)
        .map_err(|_| "thresholds must be strictly increasing and each in (0, 1]".to_string())?;
    Ok(Thresholds(values))
}

fn parse_iou(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{s:?}: {e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err("IoU threshold must be in (0, 1]".into())
    }
}

/// A failure of a subcommand; always a data error at this level.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = pose_forge::par::configure_threads(cli.jobs) {
        eprintln!("error: cannot start {} worker threads: {e}", cli.jobs);
        return ExitCode::from(1);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Generate { config, out, seed } => cmd_generate(config, out, *seed, cli.format),
        Command::Validate { dataset } => cmd_validate(dataset, cli.format),
        Command::Evaluate { eval, out } => cmd_evaluate(eval, out.as_deref(), cli.format),
        Command::Augment { dataset, split, out, seed, config } => {
            cmd_augment(dataset, split.as_deref(), out.as_deref(), *seed, config.as_deref(), cli.format)
        }
        Command::Losses { command: LossCommand::Selftest { seed, points, configurations } } => {
            cmd_selftest(*seed, *points as usize, *configurations as usize, cli.format)
        }
        Command::Bench { eval, nms_iou } => cmd_bench(eval, *nms_iou, cli.format),
    }
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON values serialize"));
}

fn cmd_generate(config: &Path, out: &Path, seed: Option<u64>, format: Format) -> Outcome {
    let mut cfg = SceneConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let base = config.parent().unwrap_or(Path::new("."));
    let setup = cfg.resolve(base)?;
    let summary = generate_dataset(&setup, out)?;
    match format {
        Format::Json => print_json(&json!({
            "out": out,
            "split": setup.split,
            "scenes": summary.scenes,
            "images": summary.images,
            "annotated_instances": summary.annotated_instances,
            "dropped_invisible": summary.dropped_invisible,
            "distractor_instances": summary.distractor_instances,
        })),
        Format::Table => println!(
            "{}",
            render_table(&[
                ("scenes".into(), summary.scenes.to_string()),
                ("images".into(), summary.images.to_string()),
                ("annotated instances".into(), summary.annotated_instances.to_string()),
                ("dropped (not visible)".into(), summary.dropped_invisible.to_string()),
                ("distractor instances".into(), summary.distractor_instances.to_string()),
            ])
        ),
    }
    Ok(())
}

fn cmd_validate(dataset: &Path, format: Format) -> Outcome {
    if !dataset.exists() {
        return Err(Failure(format!("{} does not exist", dataset.display())));
    }
    let report = validate_dataset(dataset);
    match format {
        Format::Json => print_json(&serde_json::to_value(&report)?),
        Format::Table => {
            let mut s = String::new();
            for v in &report.violations {
                let _ = writeln!(s, "{v}");
            }
            let _ = write!(
                s,
                "{} scenes, {} images checked, {} violations",
                report.scenes_checked,
                report.images_checked,
                report.violations.len()
            );
            println!("{s}");
        }
    }
    Ok(())
}

fn load_inputs(eval: &EvalArgs) -> Result<EvaluationInputs, Failure> {
    let models = eval.models.clone().unwrap_or_else(|| eval.dataset.join("models"));
    let points = PointSource::Sampled { count: eval.points as usize, seed: eval.seed };
    let inputs = load_evaluation_inputs(&eval.dataset, eval.split.as_deref(), &models, &eval.results, points)?;
    if inputs.images.is_empty() {
        return Err(Failure(format!("no annotated images found under {}", eval.dataset.display())));
    }
    if inputs.unmatched_rows > 0 {
        eprintln!("warning: {} result rows refer to images without ground truth and were ignored", inputs.unmatched_rows);
    }
    Ok(inputs)
}

fn match_config(eval: &EvalArgs) -> MatchConfig {
    let metric = match eval.metric {
        Metric::AddS => MetricKind::AddS,
        Metric::Add => MetricKind::Add,
    };
    MatchConfig { metric, ..MatchConfig::default() }
}

fn cmd_evaluate(eval: &EvalArgs, out: Option<&Path>, format: Format) -> Outcome {
    let inputs = load_inputs(eval)?;
    let report = evaluate_inputs(&inputs, &match_config(eval), &eval.thresholds.0)?;
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&report.to_json())?,
        Format::Table => report.to_table(),
    };
    println!("{}", text.trim_end());
    if let Some(path) = out {
        std::fs::write(path, format!("{}\n", text.trim_end())).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_bench(eval: &EvalArgs, nms_iou: f64, format: Format) -> Outcome {
    let inputs = load_inputs(eval)?;
    let timed = to_timed_images(&inputs)?;
    let cfg = EvalConfig { matching: match_config(eval), fractions: eval.thresholds.0.clone(), nms_iou, per_class_nms: true };
    let (report, timing) = timed_evaluate(&timed, &inputs.models, &cfg, &mut NoopObserver)?;
    match format {
        Format::Json => print_json(&json!({ "timing": timing.to_json(), "metrics": report.to_json() })),
        Format::Table => {
            println!("{}", timing.to_table());
            println!("{}", report.to_table().trim_end());
        }
    }
    Ok(())
}

fn copy_tree(from: &Path, to: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(to)?;
    for entry in std::fs::read_dir(from)? {
        let entry = entry?;
        let target = to.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_tree(&entry.path(), &target)?;
        } else {
            std::fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

fn cmd_augment(
    dataset: &Path,
    split: Option<&str>,
    out: Option<&Path>,
    seed: u64,
    config: Option<&Path>,
    format: Format,
) -> Outcome {
    let cfg = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure(format!("{}: {e}", p.display())))?;
            SceneAugmentConfig::from_toml_str(&text)?
        }
        None => SceneAugmentConfig::default(),
    };
    let root = split.map_or_else(|| dataset.to_path_buf(), |s| dataset.join(s));
    let scenes = scene_dirs(&root);
    if scenes.is_empty() {
        return Err(Failure(format!("no scenes found under {}", root.display())));
    }
    if let Some(out) = out {
        if out.exists() && std::fs::read_dir(out)?.next().is_some() {
            return Err(Failure(format!("{} exists and is not empty", out.display())));
        }
        copy_tree(dataset, out).map_err(|e| Failure(format!("copying {} to {}: {e}", dataset.display(), out.display())))?;
    }
    let mut images = 0;
    for dir in &scenes {
        let scene_id: u32 = dir
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| Failure(format!("{}: scene directory name is not a number", dir.display())))?;
        let scene = read_scene(dir, ReadOptions { check_files: true, load_images: true })?;
        let augmented = augment_scene(&scene, scene_id, seed, &cfg)?;
        let target = match out {
            Some(out) => out.join(dir.strip_prefix(dataset).unwrap_or(dir)),
            None => dir.clone(),
        };
        write_scene(&target, &augmented)?;
        images += augmented.gt.len();
    }
    let dest = out.unwrap_or(dataset);
    match format {
        Format::Json => print_json(&json!({ "scenes": scenes.len(), "images": images, "out": dest })),
        Format::Table => println!("augmented {} scenes, {images} images into {}", scenes.len(), dest.display()),
    }
    Ok(())
}

fn cmd_selftest(seed: u64, points: usize, configurations: usize, format: Format) -> Outcome {
    let cloud = sample_points(&shapes::strawberry(30.0, 36.0, 12, 16), points, seed)?;
    let report = selftest(configurations, seed, &cloud)?;
    match format {
        Format::Json => print_json(&serde_json::to_value(&report)?),
        Format::Table => {
            let rows: Vec<(String, String)> = report
                .entries
                .iter()
                .map(|e| {
                    let status = if e.passed { "ok" } else { "FAILED" };
                    let zero = if e.zero_at_ground_truth { "0 at GT" } else { "nonzero at GT" };
                    (e.name.clone(), format!("max dev {:.2e} (tol {:.0e}), {zero}, {status}", e.max_deviation, e.tolerance))
                })
                .collect();
            println!("{}", render_table(&rows).trim_end());
        }
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure("gradient self-test failed".into()))
    }
}
