//! Command-line front end: `analyze`, `synth` and `export`.
//!
//! Progress goes to standard error through `log`; data goes to files.
//! `CORRNET_THREADS` bounds the worker pool used for per-window work.

pub mod analyze;
pub mod config;
pub mod export;
pub mod synth_cmd;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::corrwin::Window;
use crate::error::Error;
use crate::network::{ExportFormat, ThresholdSpec};
use crate::synth::load_synth_config;
use config::RunConfig;

pub const THREADS_ENV: &str = "CORRNET_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "corrnet",
    version,
    about = "Correlation networks and sector statistics for equity panels"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full per-window analysis and write reports.
    Analyze(AnalyzeArgs),
    /// Simulate a factor-model market and write its panel and ground truth.
    Synth(SynthArgs),
    /// Export networks as edge list, GraphML or DOT.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// Trim level used to build networks.
    #[arg(long)]
    pub trim: Option<usize>,
    /// Fraction of highest correlations kept as edges.
    #[arg(long)]
    pub quantile: Option<f64>,
    /// Output directory (overrides the config's `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Restrict to one window: a year, `START_END`, or `all`.
    #[arg(long)]
    pub window: Option<String>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Model description (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "synth_out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// A year, `START_END`, or `all` for the stacked temporal network.
    #[arg(long)]
    pub window: String,
    /// edge_list, graphml or dot.
    #[arg(long, value_parser = clap::builder::ValueParser::new(parse_format))]
    pub format: ExportFormat,
    #[command(flatten)]
    pub overrides: Overrides,
}

fn parse_format(s: &str) -> std::result::Result<ExportFormat, String> {
    s.parse()
}

/// An error tagged with the module and window it came from.
#[derive(Debug)]
pub struct Failure {
    pub module: &'static str,
    pub window: Option<String>,
    pub error: Error,
}

impl Failure {
    pub fn new(module: &'static str, window: Option<&Window>, error: Error) -> Self {
        Failure {
            module,
            window: window.map(|w| w.to_string()),
            error,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.module)?;
        if let Some(w) = &self.window {
            write!(f, " (window {w})")?;
        }
        write!(f, ": {}", self.error)
    }
}

impl std::error::Error for Failure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub(crate) trait Context<T> {
    fn ctx(self, module: &'static str, window: Option<&Window>) -> std::result::Result<T, Failure>;
}

impl<T> Context<T> for crate::Result<T> {
    fn ctx(self, module: &'static str, window: Option<&Window>) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure::new(module, window, e))
    }
}

fn pool() -> std::result::Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
            Failure::new(
                "cli",
                None,
                Error::Config(format!(
                    "{THREADS_ENV} must be a positive integer, got `{v}`"
                )),
            )
        })?;
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| Failure::new("cli", None, Error::Computation(e.to_string())))
}

fn load_run_config(path: &PathBuf, o: &Overrides) -> std::result::Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path).ctx("cli", None)?;
    if let Some(k) = o.trim {
        cfg.set_network_trim(k);
    }
    if let Some(q) = o.quantile {
        cfg.threshold = ThresholdSpec::new(q).ctx("cli", None)?;
    }
    if let Some(out) = &o.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> std::result::Result<(), Failure> {
    let pool = pool()?;
    pool.install(|| match cli.command {
        Command::Analyze(a) => {
            let cfg = load_run_config(&a.config, &a.overrides)?;
            let p = analyze::Pipeline::load(cfg)?;
            let all = p.windows()?;
            let windows = match &a.window {
                Some(sel) => export::select_windows(&all, sel, false).ctx("cli", None)?,
                None => all,
            };
            let result = analyze::run(&p, &windows)?;
            analyze::write_reports(&p.cfg, &result).ctx("cli", None)?;
            info!("reports written to {}", p.cfg.out.display());
            Ok(())
        }
        Command::Synth(s) => {
            let (mut spec, schedule) = load_synth_config(&s.config).ctx("synth", None)?;
            if let Some(seed) = s.seed {
                spec.seed = seed;
            }
            synth_cmd::run(&spec, &schedule, &s.out).ctx("synth", None)?;
            Ok(())
        }
        Command::Export(e) => {
            let cfg = load_run_config(&e.config, &e.overrides)?;
            let p = analyze::Pipeline::load(cfg)?;
            export::run(&p, &e.window, e.format)?;
            Ok(())
        }
    })
}

/// Parse arguments, run, and map failures to a nonzero exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("corrnet: error: {f}");
            ExitCode::FAILURE
        }
    }
}
