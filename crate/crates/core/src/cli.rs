//! Command-line entry points. Every subcommand is a thin adapter over the
//! library; data goes to stdout and diagnostics to stderr.

use std::collections::BTreeSet;
use std::io::Write;
use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::aggregation::AggregationKind;
use crate::embedding::{sample_for_display, DISPLAY_CAP};
use crate::engine::{resolve_codes, select_on_dataset, SelectionResult};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, Method};
use crate::features::{load_latent_codes, write_latent_codes};
use crate::grid::{Dataset, FocusRange, Region};
use crate::selector::{ArcThresholds, SelectionParams, DEFAULT_GAMMA, DEFAULT_SIGMA};
use crate::service::{self, AppState, ServiceConfig, DEFAULT_CACHE_BYTES, DEFAULT_PORT};
use crate::store::{export_stack, format_timestamp, open_dataset};
use crate::synth::{synthesize, Family, SyntheticSpec};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_IO: u8 = 3;

const DEFAULTS_NOTE: &str =
    "Defaults: distance weight gamma (γ) = 0.3, distance decay sigma (σ) = 1.0, \
latent code size φ = 512 (8 pyramid levels × 8×8 cells). Frame indices are 0-based and ranges \
are inclusive `start:end`.";

#[derive(Debug, Parser)]
#[command(
    name = "stepselect",
    version,
    about = "Salient time-step selection for raster time series"
)]
#[command(after_help = DEFAULTS_NOTE)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a frame-stack or CSV directory and write a normalized frame stack.
    Ingest(IngestArgs),
    /// Generate a deterministic synthetic frame stack.
    Synth(SynthArgs),
    /// Select k salient steps and print the result.
    #[command(after_help = DEFAULTS_NOTE)]
    Select(SelectArgs),
    /// Compare selection methods by reconstruction error.
    #[command(after_help = DEFAULTS_NOTE)]
    Eval(EvalArgs),
    /// Print the 2D latent-space embedding as JSON.
    Embed(EmbedArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Source directory: a frame stack with meta.json or a directory of CSV frames.
    #[arg(long)]
    pub input: PathBuf,
    /// Destination frame-stack directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write whole-frame latent codes (φ = 512) to this file.
    #[arg(long)]
    pub codes_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = ["ramp", "burst", "blob", "seasonal"])]
    pub family: String,
    /// Number of frames.
    #[arg(long)]
    pub t: usize,
    /// Frame size as WIDTHxHEIGHT.
    #[arg(long, default_value = "64x64", value_parser = parse_size)]
    pub size: (usize, usize),
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Burst frame indices (burst family).
    #[arg(long, value_delimiter = ',')]
    pub bursts: Vec<usize>,
    /// Cycle length in frames (seasonal family).
    #[arg(long, default_value_t = 12)]
    pub period: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Frame-stack or CSV directory.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Inclusive focus range `start:end`; the whole dataset when omitted.
    #[arg(long)]
    pub range: Option<FocusRange>,
    /// Number of steps to select, endpoints included.
    #[arg(long)]
    pub k: usize,
    /// Structural cost weight; alpha + beta must equal 1.
    #[arg(long)]
    pub alpha: f64,
    /// Statistical cost weight; alpha + beta must equal 1.
    #[arg(long)]
    pub beta: f64,
    #[arg(long, default_value = "avg", value_parser = ["max", "min", "avg"])]
    pub agg: String,
    /// Spatial region `x0,y0,x1,y1` (inclusive cell indices).
    #[arg(long)]
    pub region: Option<Region>,
    /// Frames that must be selected.
    #[arg(long = "pin", value_delimiter = ',')]
    pub pinned: Vec<usize>,
    /// Frames that must not be selected.
    #[arg(long = "exclude", value_delimiter = ',')]
    pub excluded: Vec<usize>,
    /// Distance weight γ.
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Distance decay σ.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    /// Latent-code file to use instead of computing φ = 512 pyramid codes.
    #[arg(long)]
    pub codes: Option<PathBuf>,
    /// Print the result as JSON (default).
    #[arg(long, conflicts_with = "csv")]
    pub json: bool,
    /// Print one CSV row per selected frame.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub range: Option<FocusRange>,
    #[arg(long)]
    pub region: Option<Region>,
    /// Methods to compare.
    #[arg(long, value_delimiter = ',', default_value = "dp,even,arc")]
    pub methods: Vec<Method>,
    /// Step counts to evaluate.
    #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
    pub ks: Vec<usize>,
    /// Also run the dp selection for beta ∈ {0, 0.25, 0.5, 0.75, 1}.
    #[arg(long)]
    pub beta_sweep: bool,
    #[arg(long, default_value = "avg", value_parser = ["max", "min", "avg"])]
    pub agg: String,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    /// Arc baseline distance threshold ε.
    #[arg(long, default_value_t = 0.3)]
    pub arc_eps: f64,
    /// Arc baseline angle threshold θ in radians.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    pub arc_theta: f64,
    /// Arc baseline mixing factor.
    #[arg(long, default_value_t = 0.5)]
    pub arc_mix: f64,
    #[arg(long)]
    pub codes: Option<PathBuf>,
    /// Report file; `.json` writes the full report, anything else CSV.
    /// CSV goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub range: Option<FocusRange>,
    #[arg(long)]
    pub region: Option<Region>,
    /// Frames always kept when thinning for display.
    #[arg(long, value_delimiter = ',')]
    pub salient: Vec<usize>,
    /// Maximum number of displayed points.
    #[arg(long, default_value_t = DISPLAY_CAP)]
    pub cap: usize,
    #[arg(long)]
    pub codes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "STEPSELECT_HOST", default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, env = "STEPSELECT_PORT", default_value_t = DEFAULT_PORT)]
    pub port: u16,
    /// Directory whose subdirectories are registered as datasets.
    #[arg(long, env = "STEPSELECT_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Derived-artifact cache capacity in bytes.
    #[arg(long, env = "STEPSELECT_CACHE_BYTES", default_value_t = DEFAULT_CACHE_BYTES)]
    pub cache_bytes: usize,
    /// Concurrent computation slots; defaults to the number of cores.
    #[arg(long, env = "STEPSELECT_WORKERS")]
    pub workers: Option<usize>,
    /// Additional dataset directories to register.
    #[arg(long = "dataset")]
    pub datasets: Vec<PathBuf>,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("size `{s}` must be WIDTHxHEIGHT"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| format!("size `{s}` must be WIDTHxHEIGHT"))
    };
    Ok((parse(w)?, parse(h)?))
}

/// Exit status for a library error.
pub fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Constraint { .. } | Error::Bounds(_) | Error::NotFound(_) => EXIT_VALIDATION,
        Error::Format(_) | Error::EmptyData(_) | Error::InvalidCode(_) | Error::Io(_) => EXIT_IO,
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))
}

fn load_codes(path: &Option<PathBuf>) -> Result<Option<Vec<crate::features::LatentCode>>> {
    path.as_ref().map(load_latent_codes).transpose()
}

fn aggregation(name: &str) -> Result<AggregationKind> {
    name.parse()
}

/// Builds the selection parameters exactly as `select` does.
pub fn selection_params(args: &SelectArgs, dataset: &Dataset) -> Result<SelectionParams> {
    let range = match args.range {
        Some(r) => r,
        None => dataset.full_range()?,
    };
    Ok(SelectionParams {
        alpha: args.alpha,
        beta: args.beta,
        k: args.k,
        gamma: args.gamma,
        sigma: args.sigma,
        aggregation: aggregation(&args.agg)?,
        region: args.region,
        range,
        pinned: args.pinned.iter().copied().collect(),
        excluded: args.excluded.iter().copied().collect(),
    })
}

pub fn selection_csv(result: &SelectionResult, dataset: &Dataset) -> String {
    let mut out = String::from("frame,timestamp,structural,statistical,distance,combined\n");
    for (i, &frame) in result.steps.iter().enumerate() {
        let stamp = format_timestamp(&dataset.timestamps()[frame]);
        match i.checked_sub(1).map(|p| &result.pair_costs[p]) {
            Some(p) => out.push_str(&format!(
                "{frame},{stamp},{},{},{},{}\n",
                p.structural, p.statistical, p.distance, p.combined
            )),
            None => out.push_str(&format!("{frame},{stamp},,,,\n")),
        }
    }
    out
}

/// Runs one invocation, writing data to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Ingest(args) => {
            let dataset = open_dataset(&args.input)?;
            export_stack(&dataset, &args.out)?;
            if let Some(path) = &args.codes_out {
                write_latent_codes(path, &resolve_codes(&dataset, None, None)?)?;
            }
            writeln!(
                stdout,
                "{}",
                to_json(&service::DatasetDescriptor::of(&dataset))?
            )?;
        }
        Command::Synth(args) => {
            let family: Family = args.family.parse()?;
            let spec = SyntheticSpec::new(family, args.t, args.size.0, args.size.1, args.seed)
                .with_bursts(args.bursts.clone())
                .with_period(args.period);
            let dataset = synthesize(&spec)?;
            export_stack(&dataset, &args.out)?;
            writeln!(
                stdout,
                "{}",
                to_json(&service::DatasetDescriptor::of(&dataset))?
            )?;
        }
        Command::Select(args) => {
            let dataset = open_dataset(&args.dataset)?;
            let params = selection_params(&args, &dataset)?;
            params.validate(dataset.len())?;
            let result = select_on_dataset(&dataset, &params, load_codes(&args.codes)?)?;
            if args.csv {
                write!(stdout, "{}", selection_csv(&result, &dataset))?;
            } else {
                writeln!(stdout, "{}", to_json(&result)?)?;
            }
        }
        Command::Eval(args) => {
            if args.ks.is_empty() || args.methods.is_empty() {
                return Err(Error::constraint(
                    "at least one method and one k are required",
                    &["ks"],
                ));
            }
            let dataset = open_dataset(&args.dataset)?;
            let config = EvalConfig {
                range: args.range,
                region: args.region,
                methods: args.methods.clone(),
                ks: args.ks.clone(),
                beta_sweep: args.beta_sweep,
                aggregation: aggregation(&args.agg)?,
                gamma: args.gamma,
                sigma: args.sigma,
                arc: ArcThresholds {
                    eps: args.arc_eps,
                    theta: args.arc_theta,
                    mix: args.arc_mix,
                },
            };
            let report = evaluate(&dataset, &config, load_codes(&args.codes)?)?;
            for e in &report.errors {
                eprintln!("warning: {} k={}: {}", e.method, e.k, e.message);
            }
            match &args.out {
                Some(path)
                    if path
                        .extension()
                        .is_some_and(|x| x.eq_ignore_ascii_case("json")) =>
                {
                    std::fs::write(path, report.to_json()?)?;
                }
                Some(path) => std::fs::write(path, report.to_csv())?,
                None => write!(stdout, "{}", report.to_csv())?,
            }
        }
        Command::Embed(args) => {
            let dataset = open_dataset(&args.dataset)?;
            let range = match args.range {
                Some(r) => {
                    r.validate(dataset.len())?;
                    r
                }
                None => dataset.full_range()?,
            };
            let codes = resolve_codes(&dataset, args.region.as_ref(), load_codes(&args.codes)?)?;
            let mut points = crate::embedding::project_2d(&codes[range.start..=range.end])?;
            for p in &mut points {
                p.frame += range.start;
            }
            let salient: BTreeSet<usize> = args.salient.iter().copied().collect();
            let response = service::EmbeddingResponse {
                method: "pca".into(),
                range,
                region: args.region,
                cap: args.cap,
                points: sample_for_display(&points, &salient, args.cap),
            };
            writeln!(stdout, "{}", to_json(&response)?)?;
        }
        Command::Serve(args) => {
            let config = ServiceConfig {
                host: args.host,
                port: args.port,
                data_dir: args.data_dir.clone(),
                cache_bytes: args.cache_bytes,
                workers: args.workers.unwrap_or_else(service::default_workers),
            };
            let state = Arc::new(AppState::from_config(&config)?);
            for path in &args.datasets {
                state.register(open_dataset(path)?)?;
            }
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?;
            runtime.block_on(service::serve(config, state))?;
        }
    }
    Ok(())
}

/// Parses arguments, runs, and maps errors to exit codes.
pub fn main() -> ExitCode {
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .try_init();
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(exit_code(&e))
        }
    }
}
