//! `canet`: synthesize data, train and evaluate attention networks, fuse models,
//! export attention heat maps and run the gradient-check suite.

mod config;
mod exit;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use canet::data::{
    imu_components, joint_components, load_dataset, synthesize, window_count, write_dataset,
    ComponentSpec, Registry, SyntheticSpec, Window, WindowSpec, MFCC_NAME,
};
use canet::fusion::late_fuse_evaluate;
use canet::gradsuite::{run_suite, CASES};
use canet::models::{load_model, save_model, ExportFormat, Model, ModelKind};
use canet::train::{evaluate, fit, prepare, Metrics};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use config::{manifest_path, RunConfig, RESOLVED_NAME};
use exit::{CheckFailed, Usage};

#[derive(Debug, Parser)]
#[command(
    name = "canet",
    version,
    about = "Component attention networks for multimodal movement data"
)]
struct Cli {
    /// Seed override for generation, splitting, initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print a machine-readable JSON result on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Only errors on stderr, no human summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset (manifest plus one CSV per segment).
    GenSynth(GenSynthArgs),
    /// Train a model and write model.json, history.json and config.toml.
    Train(TrainArgs),
    /// Score a saved model on one side of the split.
    Eval(EvalArgs),
    /// Majority-vote three or more saved models.
    Fuse(FuseArgs),
    /// Write temporal and component attention maps for one window.
    ExportAttention(ExportArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct GenSynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 152)]
    segments: usize,
    /// Frames per segment.
    #[arg(long, default_value_t = 515)]
    frames: usize,
    #[arg(long, default_value_t = 50.0)]
    fps: f64,
    /// Component carrying the class signal [default: left_accelerometer, left_wrist with --skeleton]
    #[arg(long)]
    informative: Option<String>,
    /// Burst length in frames.
    #[arg(long, default_value_t = 10)]
    burst: usize,
    #[arg(long, default_value_t = 10)]
    burst_start: usize,
    #[arg(long, default_value_t = 30)]
    burst_period: usize,
    #[arg(long, default_value_t = 3.0)]
    amplitude: f64,
    /// Standard deviation of the Gaussian noise.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Put the class signal in joint trajectories of a drifting skeleton.
    #[arg(long)]
    skeleton: bool,
    /// Comma-separated groups (joints, imu, mfcc) or component names [default: all]
    #[arg(long, value_delimiter = ',')]
    components: Vec<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Manifest file or its directory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Split {
    Test,
    Train,
    All,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Manifest file or its directory.
    #[arg(long)]
    data: PathBuf,
    /// Run configuration deciding the split [default: config.toml beside the first model]
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    /// Metrics JSON file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FuseArgs {
    /// Saved model; repeat at least three times.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    #[command(flatten)]
    split: SplitArgs,
    /// Fused metrics JSON file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Ppm,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    /// Index into the windows of the chosen split.
    #[arg(long, default_value_t = 0)]
    window: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Number of consecutive seeds, starting at --seed.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenSynth(a) => gen_synth(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Fuse(a) => fuse(cli, a),
        Command::ExportAttention(a) => export_attention(cli, a),
        Command::Gradcheck(a) => gradcheck(cli, a),
    }
}

/// Human text unless `--json`; nothing at all under `--quiet` without `--json`.
fn report(cli: &Cli, human: &str, value: serde_json::Value) -> Result<()> {
    if cli.json {
        emit(&serde_json::to_string_pretty(&value)?)
    } else if !cli.quiet {
        emit(human)
    } else {
        Ok(())
    }
}

/// One line to stdout; a closed pipe is an I/O error rather than a panic.
fn emit(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "{text}")?;
    out.flush()?;
    Ok(())
}

fn select_components(tokens: &[String]) -> Result<Registry> {
    let full = Registry::default_full();
    if tokens.is_empty() {
        return Ok(full);
    }
    let mut picked: Vec<ComponentSpec> = Vec::new();
    for token in tokens {
        let group = match token.as_str() {
            "joints" => joint_components(),
            "imu" => imu_components(),
            "mfcc" => vec![full.components()
                [full.position(MFCC_NAME).expect("mfcc in full registry")]
            .clone()],
            name => match full.position(name) {
                Some(i) => vec![full.components()[i].clone()],
                None => {
                    return Err(Usage(format!(
                        "unknown component {name}; expected joints, imu, mfcc or a component name"
                    ))
                    .into())
                }
            },
        };
        picked.extend(group);
    }
    Ok(Registry::new(picked).map_err(|e| Usage(e.to_string()))?)
}

fn gen_synth(cli: &Cli, a: &GenSynthArgs) -> Result<()> {
    let registry = select_components(&a.components)?;
    let informative = a.informative.clone().unwrap_or_else(|| {
        if a.skeleton {
            "left_wrist"
        } else {
            "left_accelerometer"
        }
        .to_string()
    });
    let spec = SyntheticSpec {
        segments: a.segments,
        frames_per_segment: a.frames,
        fps: a.fps,
        registry,
        informative_component: informative,
        burst_start: a.burst_start,
        burst_frames: a.burst,
        burst_period: a.burst_period,
        amplitude: a.amplitude,
        noise_std: a.noise,
        seed: cli.seed.unwrap_or(0),
        skeleton: a.skeleton,
    };
    let dataset = synthesize(&spec)?;
    let manifest = write_dataset(&a.out, &dataset)
        .with_context(|| format!("writing dataset to {}", a.out.display()))?;

    let windowing = WindowSpec::default();
    let length = windowing.length(spec.fps)?;
    let stride = windowing.stride(spec.fps)?;
    let windows = spec.segments * window_count(spec.frames_per_segment, length, stride);
    let degenerate = spec.amplitude == 0.0;
    let mut human = format!("{} segments, {windows} windows", spec.segments);
    if degenerate {
        human.push_str("; degenerate: classes identical");
    }
    report(
        cli,
        &human,
        json!({
            "manifest": manifest,
            "segments": spec.segments,
            "windows": windows,
            "components": spec.registry.len(),
            "degenerate": degenerate,
        }),
    )
}

fn train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let mut config = RunConfig::read_or_default(a.config.as_deref())?;
    if let Some(data) = &a.data {
        config.data = Some(data.clone());
    }
    if let Some(out) = &a.out {
        config.out = Some(out.clone());
    }
    if let Some(kind) = a.model {
        config.train.model = kind;
    }
    if let Some(epochs) = a.epochs {
        config.train.epochs = epochs;
    }
    if let Some(seed) = cli.seed {
        config.train.seed = seed;
    }
    config.train.validate()?;
    let data = config
        .data
        .clone()
        .ok_or_else(|| Usage("no dataset: pass --data or set data in the config".into()))?;
    let out = config
        .out
        .clone()
        .ok_or_else(|| Usage("no output directory: pass --out or set out in the config".into()))?;

    let dataset = load_data(&data)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    config.write(&out.join(RESOLVED_NAME))?;
    info!(
        "training {} on {} segments, {} components",
        config.train.model.as_str(),
        dataset.segments.len(),
        dataset.registry.len()
    );
    let (model, history) = fit(&config.train, &dataset)?;
    save_model(&model, &out.join("model.json"))?;
    fs::write(out.join("history.json"), history.to_json()?)
        .with_context(|| format!("writing history to {}", out.display()))?;

    let human = match &history.final_metrics {
        Some(m) => format!(
            "trained {} for {} epochs: test accuracy {:.4}, macro-F1 {:.4}\nwrote {}",
            config.train.model.as_str(),
            history.epochs.len(),
            m.accuracy,
            m.macro_f1,
            out.display()
        ),
        None => format!(
            "trained {} for {} epochs\nwrote {}",
            config.train.model.as_str(),
            history.epochs.len(),
            out.display()
        ),
    };
    report(
        cli,
        &human,
        json!({
            "out": out,
            "model": config.train.model.as_str(),
            "epochs": history.epochs.len(),
            "final": history.final_metrics,
        }),
    )
}

fn load_data(path: &Path) -> Result<canet::data::Dataset> {
    let manifest = manifest_path(path);
    load_dataset(&manifest).with_context(|| format!("loading {}", manifest.display()))
}

/// Windows of the requested split, cut exactly as training did.
fn split_windows(cli: &Cli, a: &SplitArgs, first_model: &Path) -> Result<(Registry, Vec<Window>)> {
    let config_path = a.config.clone().or_else(|| {
        let beside = first_model.parent()?.join(RESOLVED_NAME);
        beside.is_file().then_some(beside)
    });
    let mut config = RunConfig::read_or_default(config_path.as_deref())?;
    if let Some(seed) = cli.seed {
        config.train.seed = seed;
    }
    let dataset = load_data(&a.data)?;
    let prepared = prepare(&config.train, &dataset)?;
    let windows = match a.split {
        Split::Test => prepared.test,
        Split::Train => prepared.train,
        Split::All => prepared.train.into_iter().chain(prepared.test).collect(),
    };
    Ok((prepared.registry, windows))
}

fn project_all(windows: &[Window], from: &Registry, model: &Model) -> Result<Vec<Window>> {
    Ok(windows
        .iter()
        .map(|w| w.project(from, model.registry()))
        .collect::<canet::Result<_>>()?)
}

fn write_metrics(path: &Path, metrics: &Metrics) -> Result<String> {
    let text = serde_json::to_string_pretty(metrics)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
    Ok(text)
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (registry, windows) = split_windows(cli, &a.split, &a.model)?;
    let windows = project_all(&windows, &registry, &model)?;
    let metrics = evaluate(&model, &windows)?;
    let text = write_metrics(&a.out, &metrics)?;
    emit(&text)
}

fn fuse(cli: &Cli, a: &FuseArgs) -> Result<()> {
    if a.models.len() < canet::fusion::MIN_VOTERS {
        return Err(canet::Error::TooFewVoters(a.models.len()).into());
    }
    let models = a
        .models
        .iter()
        .map(|p| load_model(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let (registry, windows) = split_windows(cli, &a.split, &a.models[0])?;
    let refs: Vec<&Model> = models.iter().collect();
    let metrics = late_fuse_evaluate(&refs, &registry, &windows)?;
    let text = write_metrics(&a.out, &metrics)?;
    emit(&text)
}

fn export_attention(cli: &Cli, a: &ExportArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (registry, windows) = split_windows(cli, &a.split, &a.model)?;
    let window = windows.get(a.window).ok_or_else(|| {
        Usage(format!(
            "window {} out of range; the split has {} windows",
            a.window,
            windows.len()
        ))
    })?;
    let window = window.project(&registry, model.registry())?;
    let prediction = model.predict(&window)?;
    let format = match a.format {
        Format::Csv => ExportFormat::Csv,
        Format::Ppm => ExportFormat::Ppm,
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let files = prediction
        .attention
        .export(&a.out, &format!("window_{}", a.window), format)?;
    let human = files
        .iter()
        .map(|f| format!("wrote {}", f.display()))
        .collect::<Vec<_>>()
        .join("\n");
    report(
        cli,
        &human,
        json!({
            "segment": window.segment_id(),
            "class": prediction.class,
            "probs": prediction.probs,
            "components": prediction.attention.components,
            "files": files,
        }),
    )
}

fn gradcheck(cli: &Cli, a: &GradcheckArgs) -> Result<()> {
    let base = cli.seed.unwrap_or(0);
    let seeds: Vec<u64> = (base..base + a.seeds).collect();
    let entries = run_suite(&seeds)?;
    let failed = entries.iter().filter(|e| !e.report.passed).count();
    let human = entries
        .iter()
        .map(|e| {
            format!(
                "{:<32} seed {:<4} max rel err {:.2e}  {}",
                e.case,
                e.seed,
                e.report.max_rel_error,
                if e.report.passed { "ok" } else { "FAIL" }
            )
        })
        .chain(std::iter::once(format!(
            "{} cases × {} seeds, {failed} failed",
            CASES.len(),
            seeds.len()
        )))
        .collect::<Vec<_>>()
        .join("\n");
    let value: Vec<_> = entries
        .iter()
        .map(|e| {
            json!({
                "case": e.case,
                "seed": e.seed,
                "max_rel_error": e.report.max_rel_error,
                "worst": e.report.worst,
                "coordinates": e.report.coordinates,
                "passed": e.report.passed,
            })
        })
        .collect();
    report(cli, &human, json!(value))?;
    if failed > 0 {
        return Err(CheckFailed(format!("{failed} gradient checks failed")).into());
    }
    Ok(())
}
