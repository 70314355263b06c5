//! `elmstream` command-line front end.
//!
//! Every setting is a flat `key=value` pair. Values come from built-in
//! defaults, then an optional `--config` file, then same-named flags.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use elmstream_core::io::{read_checkpoint, read_data_csv, write_checkpoint, write_data_csv};
use elmstream_core::pipeline::{
    compare, evaluate, generate_data, render_table, train, DataConfig, PipelineConfig, Task, TrainerKind,
};
use elmstream_core::{ActivationKind, ElmError, LabeledSeries, Report};

/// Process exit codes.
pub mod exit {
    pub const GENERAL: i32 = 1;
    pub const IO: i32 = 2;
    pub const UNSTABLE: i32 = 3;
    pub const MALFORMED: i32 = 4;
    pub const DIMENSION: i32 = 5;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn io(path: &Path, err: std::io::Error) -> Self {
        Self::new(exit::IO, format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ElmError> for CliError {
    fn from(e: ElmError) -> Self {
        let code = match e {
            ElmError::Unstable(_) => exit::UNSTABLE,
            ElmError::Parse { .. } => exit::MALFORMED,
            ElmError::Shape { .. } => exit::DIMENSION,
            _ => exit::GENERAL,
        };
        CliError::new(code, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "elmstream", version, about = "Streaming extreme learning machines")]
pub struct Cli {
    /// Flat key=value config file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the synthetic plant and write a data CSV.
    GenData(Settings),
    /// Train a model and write a checkpoint.
    Train(Settings),
    /// Evaluate a checkpoint on a data file.
    Evaluate(Settings),
    /// Train and evaluate all four trainers and print a comparison table.
    Compare(Settings),
}

/// Settings shared by every subcommand. Each flag has a config-file key of
/// the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct Settings {
    /// identify | envelope
    #[arg(long)]
    pub task: Option<String>,
    /// linear | batch | oselm | sgelm
    #[arg(long)]
    pub trainer: Option<String>,
    /// Multiplies the default window lengths.
    #[arg(long)]
    pub scale: Option<String>,
    #[arg(long)]
    pub hidden_dim: Option<String>,
    /// sigmoid | sine | rbf | linear
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub ridge: Option<String>,
    /// SG-ELM step size.
    #[arg(long)]
    pub gamma: Option<String>,
    /// Minority weight multiplier.
    #[arg(long)]
    pub scale_factor: Option<String>,
    /// Cost-sensitive training on the envelope task.
    #[arg(long)]
    pub weighted: Option<String>,
    /// Accept a step size outside the stability bound.
    #[arg(long)]
    pub allow_unstable: Option<String>,
    /// Rows used for the batch initialization of online trainers.
    #[arg(long)]
    pub init_rows: Option<String>,
    #[arg(long)]
    pub input_lags: Option<String>,
    #[arg(long)]
    pub output_lags: Option<String>,
    #[arg(long)]
    pub horizon: Option<String>,
    #[arg(long)]
    pub train_cycles: Option<String>,
    #[arg(long)]
    pub eval_offset: Option<String>,
    #[arg(long)]
    pub eval_cycles: Option<String>,
    #[arg(long)]
    pub msap_offset: Option<String>,
    #[arg(long)]
    pub layer_seed: Option<String>,
    #[arg(long)]
    pub data_seed: Option<String>,
    #[arg(long)]
    pub noise_seed: Option<String>,
    /// Number of cycles to generate.
    #[arg(long)]
    pub cycles: Option<String>,
    /// Comma-separated lower input bounds.
    #[arg(long)]
    pub u_lo: Option<String>,
    /// Comma-separated upper input bounds.
    #[arg(long)]
    pub u_hi: Option<String>,
    #[arg(long)]
    pub hold_min: Option<String>,
    #[arg(long)]
    pub hold_max: Option<String>,
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub theta_mis: Option<String>,
    #[arg(long)]
    pub theta_var: Option<String>,
    /// Data CSV (written by gen-data, read otherwise).
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<String>,
    /// key=value report file.
    #[arg(long)]
    pub report: Option<String>,
    /// Per-cycle prediction CSV.
    #[arg(long)]
    pub predictions: Option<String>,
}

impl Settings {
    fn pairs(&self) -> Vec<(&'static str, Option<&String>)> {
        vec![
            ("task", self.task.as_ref()),
            ("trainer", self.trainer.as_ref()),
            ("scale", self.scale.as_ref()),
            ("hidden-dim", self.hidden_dim.as_ref()),
            ("activation", self.activation.as_ref()),
            ("ridge", self.ridge.as_ref()),
            ("gamma", self.gamma.as_ref()),
            ("scale-factor", self.scale_factor.as_ref()),
            ("weighted", self.weighted.as_ref()),
            ("allow-unstable", self.allow_unstable.as_ref()),
            ("init-rows", self.init_rows.as_ref()),
            ("input-lags", self.input_lags.as_ref()),
            ("output-lags", self.output_lags.as_ref()),
            ("horizon", self.horizon.as_ref()),
            ("train-cycles", self.train_cycles.as_ref()),
            ("eval-offset", self.eval_offset.as_ref()),
            ("eval-cycles", self.eval_cycles.as_ref()),
            ("msap-offset", self.msap_offset.as_ref()),
            ("layer-seed", self.layer_seed.as_ref()),
            ("data-seed", self.data_seed.as_ref()),
            ("noise-seed", self.noise_seed.as_ref()),
            ("cycles", self.cycles.as_ref()),
            ("u-lo", self.u_lo.as_ref()),
            ("u-hi", self.u_hi.as_ref()),
            ("hold-min", self.hold_min.as_ref()),
            ("hold-max", self.hold_max.as_ref()),
            ("noise", self.noise.as_ref()),
            ("theta-mis", self.theta_mis.as_ref()),
            ("theta-var", self.theta_var.as_ref()),
            ("data", self.data.as_ref()),
            ("checkpoint", self.checkpoint.as_ref()),
            ("report", self.report.as_ref()),
            ("predictions", self.predictions.as_ref()),
        ]
    }

    pub fn keys() -> Vec<&'static str> {
        Settings::default().pairs().into_iter().map(|(k, _)| k).collect()
    }
}

fn normalize_key(k: &str) -> String {
    k.trim().trim_start_matches("--").replace('_', "-")
}

/// Parses a flat `key=value` file; `#` starts a comment.
pub fn parse_config(text: &str) -> CliResult<BTreeMap<String, String>> {
    let known = Settings::keys();
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::new(exit::GENERAL, format!("config line {}: expected key=value", i + 1)))?;
        let key = normalize_key(k);
        if !known.contains(&key.as_str()) {
            return Err(CliError::new(exit::GENERAL, format!("config line {}: unknown key '{key}'", i + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub data: DataConfig,
    pub data_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
    pub predictions_path: Option<PathBuf>,
}

struct Values(BTreeMap<String, String>);

impl Values {
    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::new(exit::GENERAL, format!("invalid value for {key}: '{v}' ({e})")))
            })
            .transpose()
    }

    fn flag(&self, key: &str) -> CliResult<Option<bool>> {
        self.raw(key)
            .map(|v| match v.to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                _ => Err(CliError::new(exit::GENERAL, format!("invalid value for {key}: '{v}'"))),
            })
            .transpose()
    }

    fn list(&self, key: &str, len: usize) -> CliResult<Option<Vec<f64>>> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        let parsed: std::result::Result<Vec<f64>, _> = v.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match parsed {
            Ok(xs) if xs.len() == len => Ok(Some(xs)),
            Ok(xs) if xs.len() == 1 => Ok(Some(vec![xs[0]; len])),
            _ => Err(CliError::new(exit::GENERAL, format!("{key} needs {len} comma-separated numbers, got '{v}'"))),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(PathBuf::from)
    }
}

impl RunConfig {
    /// Resolves defaults, then `file` entries, then `flags`.
    pub fn resolve(file: BTreeMap<String, String>, flags: &Settings) -> CliResult<Self> {
        let mut map = file;
        for (k, v) in flags.pairs() {
            if let Some(v) = v {
                map.insert(k.to_string(), v.clone());
            }
        }
        Self::from_values(Values(map))
    }

    pub fn from_pairs<'a, I: IntoIterator<Item = (&'a str, &'a str)>>(pairs: I) -> CliResult<Self> {
        let known = Settings::keys();
        let mut map = BTreeMap::new();
        for (k, v) in pairs {
            let key = normalize_key(k);
            if !known.contains(&key.as_str()) {
                return Err(CliError::new(exit::GENERAL, format!("unknown key '{key}'")));
            }
            map.insert(key, v.to_string());
        }
        Self::from_values(Values(map))
    }

    fn from_values(v: Values) -> CliResult<Self> {
        let task: Task = v.get("task")?.unwrap_or(Task::Identify);
        let trainer: TrainerKind = v.get("trainer")?.unwrap_or(TrainerKind::Sgelm);
        let scale: f64 = v.get("scale")?.unwrap_or(1.0);
        if !(scale.is_finite() && scale > 0.0) {
            return Err(CliError::new(exit::GENERAL, format!("scale must be positive, got {scale}")));
        }
        let mut p = PipelineConfig::for_task(task, trainer, scale);
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(x) = v.get($key)? {
                    $field = x;
                }
            };
        }
        set!(p.hidden_dim, "hidden-dim");
        set!(p.ridge, "ridge");
        set!(p.gamma, "gamma");
        set!(p.scale_factor, "scale-factor");
        set!(p.init_rows, "init-rows");
        set!(p.input_lags, "input-lags");
        set!(p.output_lags, "output-lags");
        set!(p.horizon, "horizon");
        set!(p.layer_seed, "layer-seed");
        if let Some(a) = v.get::<ActivationKind>("activation")? {
            p.activation = a;
        }
        if let Some(b) = v.flag("weighted")? {
            p.weighted = b;
        }
        if let Some(b) = v.flag("allow-unstable")? {
            p.allow_unstable = b;
        }
        if let Some(n) = v.get::<usize>("train-cycles")? {
            p.train_cycles = n;
            p.eval_offset = n;
        }
        set!(p.eval_offset, "eval-offset");
        set!(p.eval_cycles, "eval-cycles");
        if let Some(n) = v.get::<usize>("msap-offset")? {
            p.msap_offset = Some(n);
        }

        let seed: u64 = v.get("data-seed")?.unwrap_or(1);
        let cycles = v.get("cycles")?.unwrap_or_else(|| p.total_cycles());
        let mut data = DataConfig::new(cycles, seed);
        if let Some(lo) = v.list("u-lo", data.aprbs.lo.len())? {
            data.aprbs.lo = lo;
        }
        if let Some(hi) = v.list("u-hi", data.aprbs.hi.len())? {
            data.aprbs.hi = hi;
        }
        set!(data.aprbs.hold_min, "hold-min");
        set!(data.aprbs.hold_max, "hold-max");
        set!(data.plant.sigma_noise, "noise");
        set!(data.plant.theta_mis, "theta-mis");
        set!(data.plant.theta_var, "theta-var");
        set!(data.plant.noise_seed, "noise-seed");

        Ok(Self {
            pipeline: p,
            data,
            data_path: v.path("data"),
            checkpoint_path: v.path("checkpoint"),
            report_path: v.path("report"),
            predictions_path: v.path("predictions"),
        })
    }

    fn require(path: &Option<PathBuf>, key: &str) -> CliResult<PathBuf> {
        path.clone()
            .ok_or_else(|| CliError::new(exit::GENERAL, format!("missing required setting '{key}'")))
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn read_series(path: &Path) -> CliResult<LabeledSeries> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_data_csv(std::io::BufReader::new(file)).map_err(|e| match e {
        ElmError::Parse { .. } => CliError::new(exit::MALFORMED, format!("{}: {e}", path.display())),
        other => other.into(),
    })
}

/// Companion file holding the wall-clock part of a report.
pub fn timing_path(report: &Path) -> PathBuf {
    let mut s = report.as_os_str().to_owned();
    s.push(".timing");
    PathBuf::from(s)
}

pub fn cmd_gen_data(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let path = RunConfig::require(&cfg.data_path, "data")?;
    let series = generate_data(&cfg.data)?;
    write_file(&path, &write_data_csv(&series))?;
    let join = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let mut report = Report::new();
    report
        .text("rows", series.len())
        .metric("minority_fraction", series.minority_fraction())
        .text("u_lo", join(&cfg.data.aprbs.lo))
        .text("u_hi", join(&cfg.data.aprbs.hi))
        .text("data_seed", cfg.data.aprbs.seed)
        .text("noise_seed", cfg.data.plant.noise_seed);
    if let Some(r) = &cfg.report_path {
        write_file(r, &report.render())?;
    }
    let _ = write!(out, "{}", report.render());
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let data = RunConfig::require(&cfg.data_path, "data")?;
    let ckpt = RunConfig::require(&cfg.checkpoint_path, "checkpoint")?;
    let series = read_series(&data)?;
    let trained = train(&series, &cfg.pipeline)?;
    write_file(&ckpt, &write_checkpoint(&trained.checkpoint))?;
    let timing = format!("train_time_s={:.4}\n", trained.train_seconds);
    if let Some(r) = &cfg.report_path {
        write_file(r, &trained.report.render())?;
        write_file(&timing_path(r), &timing)?;
    }
    let _ = write!(out, "{}{timing}", trained.report.render());
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let data = RunConfig::require(&cfg.data_path, "data")?;
    let ckpt_path = RunConfig::require(&cfg.checkpoint_path, "checkpoint")?;
    let series = read_series(&data)?;
    let text = fs::read_to_string(&ckpt_path).map_err(|e| CliError::io(&ckpt_path, e))?;
    let ckpt = read_checkpoint(&text)?;
    let eval = evaluate(&series, &ckpt, &cfg.pipeline)?;
    if let Some(r) = &cfg.report_path {
        write_file(r, &eval.report.render())?;
    }
    if let Some(p) = &cfg.predictions_path {
        write_file(p, &eval.predictions)?;
    }
    let _ = write!(out, "{}", eval.report.render());
    Ok(())
}

pub fn cmd_compare(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let series = match &cfg.data_path {
        Some(p) => read_series(p)?,
        None => generate_data(&cfg.data)?,
    };
    let rows = compare(&series, &cfg.pipeline, &TrainerKind::ALL)?;
    let table = render_table(cfg.pipeline.task, &rows);
    if let Some(r) = &cfg.report_path {
        write_file(r, &table)?;
    }
    let _ = write!(out, "{table}");
    Ok(())
}

type CommandFn = fn(&RunConfig, &mut dyn Write) -> CliResult<()>;

/// Runs a parsed command line, writing human output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => parse_config(&fs::read_to_string(p).map_err(|e| CliError::io(p, e))?)?,
        None => BTreeMap::new(),
    };
    let (settings, cmd): (&Settings, CommandFn) = match &cli.command {
        Command::GenData(s) => (s, cmd_gen_data),
        Command::Train(s) => (s, cmd_train),
        Command::Evaluate(s) => (s, cmd_evaluate),
        Command::Compare(s) => (s, cmd_compare),
    };
    let cfg = RunConfig::resolve(file, settings)?;
    cmd(&cfg, out)
}
