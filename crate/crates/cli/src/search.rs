//! `search`: latency-constrained architecture search over a utility source.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use adapter_mpc::cost::CostCoefficients;
use adapter_mpc::nas::{
    brute_force_search, nas_search, CommandEvaluator, ControllerConfig, ControllerMode, Found, SearchOptions,
    SearchOutcome, SearchSpace, SearchTargets, TableEvaluator, UtilityEvaluator,
};
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::model::coefficients;
use crate::{CliError, CoefficientArgs, Output, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exhaustive,
    Reinforce,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Utility table CSV `h,r,s,utility` (default: `paths.utility_table`).
    #[arg(long, conflicts_with = "command")]
    pub table: Option<PathBuf>,
    /// External evaluator, run as `COMMAND [ARGS] --h H --r R --s S`.
    #[arg(long)]
    pub command: Option<PathBuf>,
    /// Extra leading argument for the evaluator command; repeatable.
    #[arg(long = "command-arg", requires = "command", allow_hyphen_values = true)]
    pub command_args: Vec<String>,
    /// Utility target in [0, 1].
    #[arg(long)]
    pub utility: f64,
    /// Latency target, seconds.
    #[arg(long)]
    pub latency: f64,
    /// Non-improving draws tolerated before moving to the next adapter count.
    #[arg(long, default_value_t = 100)]
    pub patience: usize,
    #[arg(long, value_enum, default_value = "exhaustive")]
    pub mode: ModeArg,
    /// Controller learning rate.
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_samples: usize,
    /// Head choices (default: those in the table).
    #[arg(long, value_delimiter = ',')]
    pub heads: Vec<usize>,
    /// Rank choices (default: those in the table).
    #[arg(long, value_delimiter = ',')]
    pub ranks: Vec<usize>,
    /// Largest adapter count (default: the table's).
    #[arg(long)]
    pub max_s: Option<usize>,
    /// Reference pair for the escalation threshold (default: smallest h and r).
    #[arg(long)]
    pub h_init: Option<usize>,
    #[arg(long)]
    pub r_init: Option<usize>,
    /// Adapter-count step.
    #[arg(long, default_value_t = 1)]
    pub delta: usize,
    /// Also evaluate every configuration and report the exhaustive optimum.
    #[arg(long)]
    pub compare: bool,
    #[command(flatten)]
    pub coefficients: CoefficientArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchReport {
    pub space: SearchSpace,
    pub targets: SearchTargets,
    pub latency_source: String,
    pub outcome: SearchOutcome,
    /// Present with `--compare`.
    pub brute_force: Option<Option<Found>>,
    pub matches_brute_force: Option<bool>,
}

enum Source {
    Table(TableEvaluator),
    Command(CommandEvaluator),
}

impl UtilityEvaluator for Source {
    fn evaluate(&mut self, a: adapter_mpc::cost::Arch) -> adapter_mpc::Result<f64> {
        match self {
            Source::Table(t) => t.evaluate(a),
            Source::Command(c) => c.evaluate(a),
        }
    }
}

fn space_for(args: &SearchArgs, table: Option<&TableEvaluator>) -> Result<SearchSpace, CliError> {
    let from_table = |f: fn(&adapter_mpc::cost::Arch) -> usize| -> Vec<usize> {
        table.map_or_else(Vec::new, |t| t.configs().map(|a| f(&a)).collect::<BTreeSet<_>>().into_iter().collect())
    };
    let heads = if args.heads.is_empty() { from_table(|a| a.h) } else { args.heads.clone() };
    let ranks = if args.ranks.is_empty() { from_table(|a| a.r) } else { args.ranks.clone() };
    let max_s = args.max_s.or_else(|| from_table(|a| a.s).last().copied());
    let (Some(max_s), false, false) = (max_s, heads.is_empty(), ranks.is_empty()) else {
        return Err(CliError::Usage("with a command evaluator, pass --heads, --ranks and --max-s".into()));
    };
    let mut space = SearchSpace::new(heads, ranks, max_s)?;
    space.h_init = args.h_init.unwrap_or(space.h_init);
    space.r_init = args.r_init.unwrap_or(space.r_init);
    space.delta = args.delta;
    space.validate()?;
    Ok(space)
}

pub fn cmd_search(cfg: &RunConfig, args: &SearchArgs) -> Result<Output, CliError> {
    let mut source = match (&args.command, args.table.as_ref().or(cfg.paths.utility_table.as_ref())) {
        (Some(program), _) => Source::Command(CommandEvaluator::new(program, args.command_args.clone())),
        (None, Some(path)) => Source::Table(TableEvaluator::from_csv(path)?),
        (None, None) => {
            return Err(CliError::Usage(
                "no utility source: pass --table, --command or set paths.utility_table".into(),
            ))
        }
    };
    let table = match &source {
        Source::Table(t) => Some(t),
        Source::Command(_) => None,
    };
    let space = space_for(args, table)?;
    let targets = SearchTargets { utility: args.utility, latency_s: args.latency, patience: args.patience };
    let (coeffs, latency_source): (CostCoefficients, String) = coefficients(cfg, &args.coefficients)?;
    let mode = match args.mode {
        ModeArg::Exhaustive => ControllerMode::Exhaustive,
        ModeArg::Reinforce => ControllerMode::Reinforce,
    };
    let opts = SearchOptions {
        controller: ControllerConfig { mode, lr: args.lr, ..ControllerConfig::default() },
        max_samples: args.max_samples,
    };
    let outcome = nas_search(&targets, &coeffs, &space, &mut source, &opts, cfg.seed)?;
    let brute_force = if args.compare {
        Some(brute_force_search(&targets, &coeffs, &space, &mut source)?)
    } else {
        None
    };
    let matches_brute_force = brute_force.map(|b| b.map(|f| f.arch) == outcome.best.map(|f| f.arch));
    let report = SearchReport { space, targets, latency_source, outcome, brute_force, matches_brute_force };
    let text = render(&report);
    Ok(Output::new(&report, text))
}

fn found(f: &Option<Found>) -> String {
    match f {
        Some(f) => format!("{}  utility {:.4}  latency {:.3} s", f.arch, f.utility, f.latency_s),
        None => "none within the latency target".into(),
    }
}

fn render(r: &SearchReport) -> String {
    let o = &r.outcome;
    let mut t = format!(
        "targets: utility >= {}, latency <= {} s ({})\nsearch:  {}\n         {} draws, {} evaluations, target {}",
        r.targets.utility,
        r.targets.latency_s,
        r.latency_source,
        found(&o.best),
        o.samples,
        o.evaluated.len(),
        if o.met_target { "met" } else { "not met" }
    );
    if let (Some(b), Some(m)) = (&r.brute_force, r.matches_brute_force) {
        let _ = write!(t, "\nbrute force: {}\n{}", found(b), if m { "same configuration" } else { "differs" });
    }
    t
}
