//! The `noisebank` command line.
//!
//! Every subcommand prints exactly one JSON document on stdout. Diagnostics go
//! to stderr. Exit status is 0 on success, 1 on usage errors and 2 on data errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::ddim::{noise_offset, Adjustment};
use crate::error::{Error, Result};
use crate::features::{extract_all, FeatureConfig, FeatureKind};
use crate::image::ImageBuffer;
use crate::library::{
    blob_path, build_library, ingest_records, load_library, meta_path, sample_noise,
    save_library, NoiseTensor, Posterior,
};
use crate::query::{bench_engine, GoalSpec, QueryEngine};
use crate::schedule::{Schedule, ScheduleKind};
use crate::synth::{synth_posterior, Smoothing, SynthConfig, ToyDenoiser};
use crate::tensor::Shape;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "noisebank", version, about = "Goal-driven retrieval of diffusion initial noise")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Suppress diagnostics on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Emit compact single-line JSON instead of pretty-printed JSON.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads (default: all hardware threads).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample noise, produce posteriors and store the feature library.
    Build(BuildArgs),
    /// Merge external feature records (e.g. embeddings) into a library.
    Ingest(IngestArgs),
    /// Retrieve the noise best matching a goal.
    Query(QueryArgs),
    /// Print a library header, or one record with --id.
    Inspect(InspectArgs),
    /// Extract features from a PNG or binary PPM image.
    Features(FeaturesArgs),
    /// Build a diffusion schedule and report its residual signal.
    Schedule(ScheduleArgs),
    /// Write the synthetic posterior of one noise as a binary PPM.
    Synth(SynthArgs),
    /// Shift a noise's color tendency by sampling, adjusting and inverting.
    Offset(OffsetArgs),
    /// Time the matching and selection phases of a query.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct SynthFlags {
    /// Gaussian blur sigma of the synthetic posterior.
    #[arg(long, default_value_t = 4.0)]
    blur_sigma: f64,
    /// Weight of each channel's mean in the synthetic posterior.
    #[arg(long, default_value_t = 0.5)]
    color_gain: f64,
}

impl SynthFlags {
    fn config(&self) -> SynthConfig {
        SynthConfig {
            blur_sigma: self.blur_sigma,
            color_gain: self.color_gain,
            output_size: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum PosteriorArg {
    Synthetic,
    IngestDir,
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    count: u64,
    #[arg(long, default_value = "4x64x64")]
    shape: Shape,
    #[arg(long, value_enum, default_value = "synthetic")]
    posterior: PosteriorArg,
    /// Directory of `<id>.png` / `<id>.ppm` posteriors for `--posterior ingest-dir`.
    #[arg(long, required_if_eq("posterior", "ingest-dir"))]
    images: Option<PathBuf>,
    /// Feature config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    synth: SynthFlags,
    /// Output path prefix.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    lib: PathBuf,
    #[arg(long)]
    records: PathBuf,
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[arg(long)]
    lib: PathBuf,
    #[arg(long)]
    goal: PathBuf,
    /// Overrides the keep count of the final stage.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    top_k: Option<u64>,
    /// Write the winning noise tensor as little-endian f32.
    #[arg(long)]
    emit_noise: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    lib: PathBuf,
    #[arg(long)]
    id: Option<u64>,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    #[arg(long)]
    image: PathBuf,
    /// Comma-separated kinds; overrides the config's list.
    #[arg(long, value_delimiter = ',')]
    kinds: Option<Vec<String>>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScheduleFlags {
    #[arg(long, default_value = "scaled-linear")]
    kind: ScheduleKind,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 0.00085)]
    beta_start: f64,
    #[arg(long, default_value_t = 0.012)]
    beta_end: f64,
}

impl ScheduleFlags {
    fn build(&self) -> Result<Schedule> {
        Schedule::new(self.kind, self.steps, self.beta_start, self.beta_end)
    }
}

#[derive(Args, Debug)]
struct ScheduleArgs {
    #[command(flatten)]
    schedule: ScheduleFlags,
    /// Add a summary of the beta sequence.
    #[arg(long)]
    report: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    id: u64,
    #[arg(long, default_value = "4x64x64")]
    shape: Shape,
    #[command(flatten)]
    synth: SynthFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OffsetArgs {
    /// Take the noise from this library instead of regenerating it from --seed.
    #[arg(long, conflicts_with = "seed")]
    lib: Option<PathBuf>,
    #[arg(long, required_unless_present = "lib")]
    seed: Option<u64>,
    #[arg(long)]
    id: u64,
    #[arg(long, default_value = "4x64x64")]
    shape: Shape,
    /// `brightness` or `saturation`.
    #[arg(long)]
    adjust: String,
    #[arg(long, allow_negative_numbers = true)]
    delta: f64,
    /// DDIM steps for both sampling and inversion.
    #[arg(long, default_value_t = 50)]
    ddim_steps: usize,
    /// Smoothing operator of the toy denoiser: identity, box3 or gauss(<sigma>).
    #[arg(long, default_value = "gauss(0.5)")]
    smoothing: String,
    #[command(flatten)]
    schedule: ScheduleFlags,
    /// Write the offset noise as little-endian f32.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    lib: PathBuf,
    #[arg(long)]
    goal: PathBuf,
    #[arg(long, default_value_t = 10)]
    reps: usize,
}

/// Collects the diagnostics of one invocation; stdout carries only the final document.
struct Notes(Vec<String>);

impl Notes {
    fn note(&mut self, msg: impl std::fmt::Display) {
        self.0.push(msg.to_string());
    }
}

fn doc<T: Serialize>(value: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(value)?)
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n as usize);
    }
    let mut notes = Notes(Vec::new());
    let result = match pool.build() {
        Ok(pool) => pool.install(|| dispatch(cli.command, &mut notes)),
        Err(e) => Err(Error::invalid(format!("cannot start worker threads: {e}"))),
    };
    if !cli.quiet {
        for n in &notes.0 {
            let _ = writeln!(err, "{n}");
        }
    }
    let text = result.and_then(|value| {
        Ok(if cli.json {
            serde_json::to_string(&value)?
        } else {
            serde_json::to_string_pretty(&value)?
        })
    });
    match text {
        Ok(text) => match writeln!(out, "{text}") {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let _ = writeln!(err, "error: cannot write output: {e}");
                EXIT_DATA
            }
        },
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load_config(path: Option<&Path>) -> Result<FeatureConfig> {
    match path {
        Some(p) => FeatureConfig::from_json(&read_text(p)?),
        None => Ok(FeatureConfig::default()),
    }
}

fn load_goal(path: &Path) -> Result<GoalSpec> {
    let base = path.parent().unwrap_or(Path::new("."));
    GoalSpec::from_json(&read_text(path)?, base)
}

fn write_noise(path: &Path, noise: &NoiseTensor) -> Result<()> {
    crate::library::ensure_parent(path)?;
    fs::write(path, noise.to_le_bytes()).map_err(|e| Error::io(path, e))
}

fn dispatch(command: Command, notes: &mut Notes) -> Result<serde_json::Value> {
    match command {
        Command::Build(a) => {
            let config = load_config(a.config.as_deref())?;
            let posterior = match a.posterior {
                PosteriorArg::Synthetic => Posterior::Synthetic(a.synth.config()),
                PosteriorArg::IngestDir => {
                    Posterior::IngestDir(a.images.expect("clap enforces --images"))
                }
            };
            notes.note(format_args!("building {} records of shape {}", a.count, a.shape));
            let lib = build_library(a.seed, a.count, a.shape, &posterior, &config)?;
            save_library(&lib, &a.out)?;
            Ok(json!({
                "count": lib.len(),
                "meta": meta_path(&a.out),
                "noise": blob_path(&a.out),
            }))
        }
        Command::Ingest(a) => {
            let lib = load_library(&a.lib)?;
            let lib = ingest_records(lib, &a.records)?;
            save_library(&lib, &a.lib)?;
            let with_semantic = lib.records().iter().filter(|r| r.semantic.is_some()).count();
            Ok(json!({ "count": lib.len(), "with_semantic": with_semantic }))
        }
        Command::Query(a) => {
            let lib = load_library(&a.lib)?;
            let mut goal = load_goal(&a.goal)?;
            if let Some(k) = a.top_k {
                if let Some(last) = goal.stages.last_mut() {
                    last.keep = k as usize;
                }
            }
            let ranked = QueryEngine::new(&lib).progressive_rerank(&goal)?;
            if let Some(path) = &a.emit_noise {
                let best = ranked.first().ok_or(Error::EmptyLibrary)?;
                write_noise(path, &lib.noise(best.noise_id)?)?;
                notes.note(format_args!("wrote noise {} to {}", best.noise_id, path.display()));
            }
            doc(&ranked)
        }
        Command::Inspect(a) => {
            let lib = load_library(&a.lib)?;
            match a.id {
                Some(id) => doc(lib.record(id)?),
                None => doc(lib.header()),
            }
        }
        Command::Features(a) => {
            let mut config = load_config(a.config.as_deref())?;
            if let Some(kinds) = a.kinds {
                config.kinds = kinds
                    .iter()
                    .map(|k| k.trim().parse::<FeatureKind>())
                    .collect::<Result<_>>()?;
                if config.kinds.contains(&FeatureKind::Semantic) {
                    return Err(Error::invalid(
                        "semantic embeddings cannot be computed from an image; ingest them instead",
                    ));
                }
            }
            config.validate()?;
            let img = ImageBuffer::open(&a.image)?;
            doc(&extract_all(&img, &config, None)?)
        }
        Command::Schedule(a) => {
            let schedule = a.schedule.build()?;
            let residual = schedule.residual_signal();
            let alpha_bar = *schedule.alphas_cumprod().last().expect("schedules have >= 1 step");
            let mut report = json!({
                "kind": schedule.kind(),
                "steps": schedule.steps(),
                "alpha_bar_final": alpha_bar,
                "signal": residual.signal,
                "noise": residual.noise,
            });
            if a.report {
                let betas = schedule.betas();
                let mean = betas.iter().sum::<f64>() / betas.len() as f64;
                report["betas"] = json!({
                    "first": betas[0],
                    "last": betas[betas.len() - 1],
                    "min": betas.iter().copied().fold(f64::INFINITY, f64::min),
                    "max": betas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    "mean": mean,
                });
            }
            Ok(report)
        }
        Command::Synth(a) => {
            let eps = sample_noise(a.seed, a.id, a.shape).to_tensor();
            let img = synth_posterior(&eps, &a.synth.config())?;
            img.save_ppm(&a.out)?;
            let color = crate::features::color_features(&img);
            Ok(json!({
                "path": a.out,
                "width": img.width(),
                "height": img.height(),
                "mean_rgb": color.mean_rgb,
            }))
        }
        Command::Offset(a) => {
            let adjustment = Adjustment::new(&a.adjust, a.delta)?;
            let smoothing: Smoothing = a.smoothing.parse()?;
            let noise = match (&a.lib, a.seed) {
                (Some(lib), _) => load_library(lib)?.noise(a.id)?,
                (None, Some(seed)) => sample_noise(seed, a.id, a.shape),
                (None, None) => unreachable!("clap requires --lib or --seed"),
            };
            let schedule = a.schedule.build()?;
            let denoiser = ToyDenoiser::new(&schedule, smoothing)?;
            let eps = noise.to_tensor();
            let shifted = noise_offset(&eps, adjustment, &schedule, &denoiser, a.ddim_steps)?;
            let result = NoiseTensor::from_tensor(noise.noise_id, &shifted);
            write_noise(&a.out, &result)?;
            Ok(json!({
                "noise_id": noise.noise_id,
                "adjustment": adjustment,
                "max_abs_change": shifted.max_abs_diff(&eps),
                "out": a.out,
            }))
        }
        Command::Bench(a) => {
            let lib = load_library(&a.lib)?;
            let goal = load_goal(&a.goal)?;
            let engine = QueryEngine::new(&lib);
            doc(&bench_engine(&engine, &goal, a.reps)?)
        }
    }
}
