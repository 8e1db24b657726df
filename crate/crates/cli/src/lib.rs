//! Command-line driver: private inference, oracle verification, profiling,
//! cost-model fitting, latency estimation, architecture search and reports.

pub mod config;
pub mod infer;
pub mod model;
pub mod search;

use std::path::{Path, PathBuf};
use std::str::FromStr;

use adapter_mpc::cost::Arch;
use adapter_mpc::Error;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

pub use config::RunConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_PROTOCOL: u8 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Core(e) if e.is_protocol() => EXIT_PROTOCOL,
            CliError::Core(Error::Io { .. } | Error::Format(_) | Error::Evaluator(_)) => EXIT_IO,
            CliError::Core(_) => EXIT_USAGE,
        }
    }
}

/// What a command produced: a JSON document for `--json`, a human rendering
/// otherwise, and a failure message when an acceptance check did not pass.
#[derive(Debug)]
pub struct Output {
    pub json: Value,
    pub text: String,
    pub failure: Option<String>,
}

impl Output {
    pub fn new(report: &impl Serialize, text: String) -> Self {
        Output {
            json: serde_json::to_value(report).expect("reports serialize"),
            text,
            failure: None,
        }
    }

    pub fn exit_code(&self) -> u8 {
        if self.failure.is_some() {
            EXIT_FAILED
        } else {
            EXIT_OK
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "adapter-mpc", version, about = "Two-party private inference for low-rank adapter pipelines")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print JSON to stdout instead of a human-readable summary.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write random weights and features for the configured adapter.
    Init(infer::InitArgs),
    /// Run one private inference, in process or as one TCP party.
    Infer(infer::InferArgs),
    /// Compare private and double-precision logits over seeded inputs.
    Verify(infer::VerifyArgs),
    /// Rounds, traffic and latency predicted for one configuration.
    Estimate(model::EstimateArgs),
    /// Run the private pipeline over a grid and record costs.
    Profile(model::ProfileArgs),
    /// Fit the affine cost model to profile samples.
    Fit(model::FitArgs),
    /// Latency-constrained architecture search.
    Search(search::SearchArgs),
    /// Cost table for several configurations against the full fine-tuning baseline.
    Report(model::ReportArgs),
}

/// Shared `--coefficients` flag.
#[derive(Debug, Clone, Args)]
pub struct CoefficientArgs {
    /// Fitted coefficients (JSON from `fit`); the published WAN set otherwise.
    #[arg(long)]
    pub coefficients: Option<PathBuf>,
}

/// `h,r,s` triple on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchArg(pub Arch);

impl FromStr for ArchArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [h, r, s] if Arch::new(h, r, s).is_valid() => Ok(ArchArg(Arch::new(h, r, s))),
            [h, r, s] => Err(format!("invalid configuration h={h} r={r} s={s} (need h, r, s >= 1 and h | r)")),
            _ => Err(format!("expected h,r,s, got {s:?}")),
        }
    }
}

/// Loads the run config named by `--config` (defaults otherwise) and applies
/// the `--seed` override.
pub fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Init(a) => infer::cmd_init(&cfg, a),
        Command::Infer(a) => infer::cmd_infer(&cfg, a),
        Command::Verify(a) => infer::cmd_verify(&cfg, a),
        Command::Estimate(a) => model::cmd_estimate(&cfg, a),
        Command::Profile(a) => model::cmd_profile(&cfg, a),
        Command::Fit(a) => model::cmd_fit(&cfg, a),
        Command::Search(a) => search::cmd_search(&cfg, a),
        Command::Report(a) => model::cmd_report(&cfg, a),
    }
}

/// Writes `value` as pretty JSON, creating parent directories.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub(crate) fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display()))),
        None => Ok(()),
    }
}
