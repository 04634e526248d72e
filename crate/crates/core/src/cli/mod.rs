//! Command-line entry point, run configuration, manifests and plot data.
//!
//! Settings resolve as flags over `--config` file over defaults. Output goes
//! to `--out`, else `$MQTCN_OUT_ROOT/<subcommand>`, else `runs/<subcommand>`.

mod commands;
mod config;
mod manifest;
mod plot;

pub use config::{AnomalySettings, FeatureConfig, RunConfig, SynthSettings, TransferSettings};
pub use manifest::{sha256_file, InputFile, RunManifest};
pub use plot::emit_plot_data;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

pub const OUT_ROOT_ENV: &str = "MQTCN_OUT_ROOT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Synth,
    Ingest,
    Train,
    Cv,
    Evaluate,
    Dtw,
    Transfer,
    Forecast,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Synth => "synth",
            Task::Ingest => "ingest",
            Task::Train => "train",
            Task::Cv => "cv",
            Task::Evaluate => "evaluate",
            Task::Dtw => "dtw",
            Task::Transfer => "transfer",
            Task::Forecast => "forecast",
        }
    }

    fn parse(name: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(name.into()))
            .map_err(|_| Error::data(format!("unknown subcommand `{name}` in manifest")))
    }
}

/// A fully resolved invocation.
#[derive(Debug, Clone)]
pub struct Job {
    pub task: Task,
    pub config: RunConfig,
    /// `(role, path)`; roles may repeat (e.g. `candidate`).
    pub inputs: Vec<(String, PathBuf)>,
    pub out: PathBuf,
}

impl Job {
    pub fn new(task: Task, config: RunConfig, out: impl Into<PathBuf>) -> Self {
        Self {
            task,
            config,
            inputs: Vec::new(),
            out: out.into(),
        }
    }

    pub fn with_input(mut self, role: &str, path: impl Into<PathBuf>) -> Self {
        self.inputs.push((role.to_string(), path.into()));
        self
    }

    fn input(&self, role: &str) -> Result<&Path> {
        self.optional_input(role)
            .ok_or_else(|| Error::invalid(format!("missing required input `{role}`")))
    }

    fn optional_input(&self, role: &str) -> Option<&Path> {
        self.inputs.iter().find(|(r, _)| r == role).map(|(_, p)| p.as_path())
    }

    fn inputs_of(&self, role: &str) -> Vec<&Path> {
        self.inputs.iter().filter(|(r, _)| r == role).map(|(_, p)| p.as_path()).collect()
    }

    /// Rebuilds a job from a manifest after checking input hashes.
    pub fn from_manifest(manifest: &RunManifest, out: impl Into<PathBuf>) -> Result<Self> {
        manifest.verify_inputs()?;
        Ok(Self {
            task: Task::parse(&manifest.subcommand)?,
            config: manifest.config.clone(),
            inputs: manifest.inputs.iter().map(|i| (i.role.clone(), i.path.clone())).collect(),
            out: out.into(),
        })
    }
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub artifacts: Vec<String>,
    pub report: Option<MetricsReport>,
    pub messages: Vec<String>,
}

/// Runs `job`, writing `config.json` and `manifest.json` next to its
/// artifacts.
pub fn execute(job: &Job) -> Result<RunSummary> {
    job.config.validate()?;
    let mut inputs = Vec::with_capacity(job.inputs.len());
    for (role, path) in &job.inputs {
        let sha256 = sha256_file(path)?;
        let path = std::fs::canonicalize(path).map_err(|e| Error::file(path, e))?;
        inputs.push(InputFile {
            role: role.clone(),
            path,
            sha256,
        });
    }
    let dir = crate::harness::RunDir::create(&job.out)?;
    let mut out = commands::run(job, &dir)?;
    crate::harness::write_json(&dir.path("config.json"), &job.config)?;
    out.artifacts.push("config.json".into());
    out.artifacts.push("manifest.json".into());
    let manifest = RunManifest {
        subcommand: job.task.name().into(),
        config: job.config.clone(),
        inputs,
        seed: job.config.seed,
        artifacts: out.artifacts.clone(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
    };
    crate::harness::write_json(&dir.path("manifest.json"), &manifest)?;
    Ok(RunSummary {
        out_dir: dir.root,
        artifacts: out.artifacts,
        report: out.report,
        messages: out.messages,
    })
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Data(_)
        | Error::TooShort { .. }
        | Error::Leakage(_)
        | Error::File { .. }
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => EXIT_DATA,
        _ => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Parser)]
#[command(name = "mqtcn", version, about = "Probabilistic EV charging-load forecasting with multi-quantile TCNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic charging sessions and a holiday calendar.
    Synth(SynthArgs),
    /// Aggregate sessions to an hourly feature frame.
    Ingest(IngestArgs),
    /// Train one configuration on the development range and score the test tail.
    Train(TrainArgs),
    /// Random search with blocked cross-validation, then final fit and test.
    Cv(CvArgs),
    /// Score a checkpoint on the test tail of a frame.
    Evaluate(EvaluateArgs),
    /// Rank candidate source sites by DTW distance to a target.
    Dtw(DtwArgs),
    /// Head-replacement transfer of a checkpoint to a data-scarce target.
    Transfer(TransferArgs),
    /// Forecast one horizon from a given origin.
    Forecast(ForecastArgs),
    /// Repeat a run from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config file (or a run manifest) overriding defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for CV trials.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct ModelFlags {
    #[arg(long)]
    lookback: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Comma-separated quantile levels, e.g. 0.05,0.5,0.9.
    #[arg(long, value_delimiter = ',')]
    quantiles: Option<Vec<f64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Sort quantiles per step before scoring.
    #[arg(long)]
    sort_quantiles: bool,
}

impl ModelFlags {
    fn apply(&self, c: &mut RunConfig) {
        set(&mut c.lookback, self.lookback);
        set(&mut c.horizon, self.horizon);
        set(&mut c.quantiles, self.quantiles.clone());
        set(&mut c.epochs, self.epochs);
        set(&mut c.patience, self.patience);
        c.sort_quantiles |= self.sort_quantiles;
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    site: Option<String>,
    #[arg(long)]
    months: Option<u32>,
    /// RFC 3339 timestamp of the first hour.
    #[arg(long)]
    start: Option<String>,
    /// Rotate the daily shape later by this many hours.
    #[arg(long)]
    hour_shift: Option<usize>,
    /// Multiply the session rate.
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    common: Common,
    /// Session CSV or JSON-lines file.
    #[arg(long)]
    sessions: PathBuf,
    #[arg(long)]
    site: Option<String>,
    /// Holiday CSV (date,name).
    #[arg(long)]
    holidays: Option<PathBuf>,
    #[arg(long)]
    anomaly_k: Option<f64>,
    #[arg(long)]
    no_anomaly_filter: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    frame: PathBuf,
    #[arg(long)]
    holidays: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    frame: PathBuf,
    #[arg(long)]
    holidays: Option<PathBuf>,
    /// Number of random-search trials.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    frame: PathBuf,
    #[arg(long)]
    sort_quantiles: bool,
}

#[derive(Debug, Args)]
struct DtwArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    candidates: Vec<PathBuf>,
    #[arg(long)]
    window_days: Option<usize>,
    /// Sakoe-Chiba band width.
    #[arg(long)]
    band: Option<usize>,
}

#[derive(Debug, Args)]
struct TransferArgs {
    #[command(flatten)]
    common: Common,
    /// Source checkpoint.
    #[arg(long)]
    source: PathBuf,
    /// Target frame CSV.
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    budget_hours: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    quantiles: Option<Vec<f64>>,
    #[arg(long)]
    appended_blocks: Option<usize>,
    /// Leave the top N source blocks trainable.
    #[arg(long)]
    unfreeze_top: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Also train a from-scratch model on the same budget.
    #[arg(long)]
    compare_scratch: bool,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    frame: PathBuf,
    /// RFC 3339 timestamp of the first forecast hour.
    #[arg(long)]
    origin: String,
    #[arg(long)]
    sort_quantiles: bool,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn default_out(task: &str) -> PathBuf {
    let root = std::env::var_os(OUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    root.join(task)
}

fn base(common: &Common) -> Result<RunConfig> {
    let mut c = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    set(&mut c.seed, common.seed);
    set(&mut c.jobs, common.jobs);
    Ok(c)
}

fn resolve(command: Command) -> Result<Job> {
    let (task, common_out, config, inputs): (Task, Option<PathBuf>, RunConfig, Vec<(&str, PathBuf)>) = match command {
        Command::Synth(a) => {
            let mut c = base(&a.common)?;
            set(&mut c.synth.site_id, a.site);
            set(&mut c.synth.months, a.months);
            set(&mut c.synth.start, a.start);
            set(&mut c.synth.hour_shift, a.hour_shift);
            set(&mut c.synth.scale, a.scale);
            (Task::Synth, a.common.out, c, vec![])
        }
        Command::Ingest(a) => {
            let mut c = base(&a.common)?;
            if a.site.is_some() {
                c.site_id = a.site;
            }
            set(&mut c.anomaly.k, a.anomaly_k);
            c.anomaly.enabled &= !a.no_anomaly_filter;
            let mut inputs = vec![("sessions", a.sessions)];
            inputs.extend(a.holidays.map(|h| ("holidays", h)));
            (Task::Ingest, a.common.out, c, inputs)
        }
        Command::Train(a) => {
            let mut c = base(&a.common)?;
            a.model.apply(&mut c);
            let mut inputs = vec![("frame", a.frame)];
            inputs.extend(a.holidays.map(|h| ("holidays", h)));
            (Task::Train, a.common.out, c, inputs)
        }
        Command::Cv(a) => {
            let mut c = base(&a.common)?;
            a.model.apply(&mut c);
            set(&mut c.search.budget, a.budget);
            set(&mut c.split.folds, a.folds);
            let mut inputs = vec![("frame", a.frame)];
            inputs.extend(a.holidays.map(|h| ("holidays", h)));
            (Task::Cv, a.common.out, c, inputs)
        }
        Command::Evaluate(a) => {
            let mut c = base(&a.common)?;
            c.sort_quantiles |= a.sort_quantiles;
            (Task::Evaluate, a.common.out, c, vec![("ckpt", a.ckpt), ("frame", a.frame)])
        }
        Command::Dtw(a) => {
            let mut c = base(&a.common)?;
            set(&mut c.ranking.window_days, a.window_days);
            if a.band.is_some() {
                c.ranking.band = a.band;
            }
            let mut inputs = vec![("target", a.target)];
            inputs.extend(a.candidates.into_iter().map(|p| ("candidate", p)));
            (Task::Dtw, a.common.out, c, inputs)
        }
        Command::Transfer(a) => {
            let mut c = base(&a.common)?;
            set(&mut c.transfer.budget_hours, a.budget_hours);
            set(&mut c.horizon, a.horizon);
            set(&mut c.quantiles, a.quantiles);
            set(&mut c.transfer.appended_blocks, a.appended_blocks);
            set(&mut c.transfer.unfreeze_top, a.unfreeze_top);
            set(&mut c.transfer.epochs, a.epochs);
            c.transfer.compare_scratch |= a.compare_scratch;
            (Task::Transfer, a.common.out, c, vec![("source", a.source), ("target", a.target)])
        }
        Command::Forecast(a) => {
            let mut c = base(&a.common)?;
            c.origin = Some(a.origin);
            c.sort_quantiles |= a.sort_quantiles;
            (Task::Forecast, a.common.out, c, vec![("ckpt", a.ckpt), ("frame", a.frame)])
        }
        Command::Replay(a) => {
            let m = RunManifest::load(&a.manifest)?;
            let out = a.out.unwrap_or_else(|| default_out(&m.subcommand));
            return Job::from_manifest(&m, out);
        }
    };
    let out = common_out.unwrap_or_else(|| default_out(task.name()));
    Ok(inputs
        .into_iter()
        .fold(Job::new(task, config, out), |j, (r, p)| j.with_input(r, p)))
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Messages go to stdout, errors to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match resolve(cli.command).and_then(|job| execute(&job)) {
        Ok(summary) => {
            for m in &summary.messages {
                println!("{m}");
            }
            if let Some(r) = &summary.report {
                println!("{}", r.table());
            }
            println!("wrote {}", summary.out_dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
