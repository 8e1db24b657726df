//! `estimate`, `profile`, `fit` and `report`.

use std::fmt::Write as _;
use std::path::PathBuf;

use adapter_mpc::cost::{
    estimate_comm_gb, estimate_latency, estimate_rounds, fit_cost_model, profile_pipeline, read_coefficients,
    read_profile_csv, round_speedup, write_coefficients, write_profile_csv, Arch, Baseline, CostCoefficients,
    LatencyEstimate, ProfileSample, SFT_BASELINE,
};
use adapter_mpc::runtime::TransportKind;
use clap::Args;
use serde::Serialize;

use crate::{ensure_parent, ArchArg, CliError, CoefficientArgs, Output, RunConfig};

/// Tag printed next to every constant taken from the published evaluation.
pub const PUBLISHED: &str = "[published]";

/// Latency coefficients from `--coefficients`, else the published set for
/// the configured environment. Returns them with a provenance label.
pub fn coefficients(cfg: &RunConfig, args: &CoefficientArgs) -> Result<(CostCoefficients, String), CliError> {
    match &args.coefficients {
        Some(path) => {
            let c = read_coefficients(path)?;
            let label = format!("[fitted {} model, {}]", c.env, path.display());
            Ok((c, label))
        }
        None => {
            let c = CostCoefficients::published(&cfg.env.label).map_err(|e| {
                CliError::Usage(format!("{e}; only WAN coefficients are bundled, pass --coefficients from `fit`"))
            })?;
            let label = format!("{PUBLISHED} {} coefficients", c.env);
            Ok((c, label))
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub h: usize,
    #[arg(long)]
    pub r: usize,
    #[arg(long)]
    pub s: usize,
    #[command(flatten)]
    pub coefficients: CoefficientArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    #[serde(flatten)]
    pub arch: Arch,
    pub rounds: u64,
    pub comm_gb: f64,
    pub comm_gb_source: String,
    pub latency: LatencyEstimate,
    pub latency_source: String,
}

pub fn estimate(a: Arch, c: &CostCoefficients, label: &str) -> Estimate {
    Estimate {
        arch: a,
        rounds: estimate_rounds(a),
        comm_gb: estimate_comm_gb(a),
        comm_gb_source: format!("{PUBLISHED} traffic model"),
        latency: estimate_latency(a, c),
        latency_source: label.to_owned(),
    }
}

pub fn cmd_estimate(cfg: &RunConfig, args: &EstimateArgs) -> Result<Output, CliError> {
    let a = Arch::new(args.h, args.r, args.s);
    if !a.is_valid() {
        return Err(CliError::Usage(format!("invalid configuration {a} (need h, r, s >= 1 and h | r)")));
    }
    let (c, label) = coefficients(cfg, &args.coefficients)?;
    let e = estimate(a, &c, &label);
    let text = format!(
        "{a}\nrounds   {}\ntraffic  {:.2} GB {}\nlatency  {:.2} s (comm {:.2} s + comp {:.2} s) {}",
        e.rounds, e.comm_gb, e.comm_gb_source, e.latency.total_s, e.latency.comm_s, e.latency.comp_s, e.latency_source
    );
    Ok(Output::new(&e, text))
}

#[derive(Debug, Clone, Args)]
pub struct ProfileArgs {
    /// Head counts to profile.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4])]
    pub heads: Vec<usize>,
    /// Ranks to profile; pairs with `r % h != 0` are skipped.
    #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 12, 16])]
    pub ranks: Vec<usize>,
    /// Adapter counts to profile.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3])]
    pub adapters: Vec<usize>,
    /// Run the parties over loopback TCP.
    #[arg(long)]
    pub tcp: bool,
    /// CSV output (default: `output_dir/profile.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn profile_grid(heads: &[usize], ranks: &[usize], adapters: &[usize]) -> Vec<Arch> {
    let mut grid = Vec::new();
    for &s in adapters {
        for &h in heads {
            for &r in ranks {
                let a = Arch::new(h, r, s);
                if a.is_valid() {
                    grid.push(a);
                }
            }
        }
    }
    grid
}

pub fn cmd_profile(cfg: &RunConfig, args: &ProfileArgs) -> Result<Output, CliError> {
    let grid = profile_grid(&args.heads, &args.ranks, &args.adapters);
    if grid.is_empty() {
        return Err(CliError::Usage("the profile grid has no valid (h, r, s)".into()));
    }
    let kind = if args.tcp { TransportKind::TcpLoopback } else { TransportKind::InProcess };
    let samples = profile_pipeline(&grid, &cfg.adapter, cfg.fixed_point()?, &cfg.network()?, kind, cfg.seed)?;
    let path = cfg.output_path(args.out.as_deref(), "profile.csv");
    if let Some(p) = &path {
        ensure_parent(p)?;
        write_profile_csv(p, &samples)?;
    }
    let mut text = format!("{:>3} {:>4} {:>3} {:>7} {:>10} {:>11} {:>11}\n", "h", "r", "s", "rounds", "bytes", "comm s", "comp s");
    for x in &samples {
        let _ = writeln!(
            text,
            "{:>3} {:>4} {:>3} {:>7} {:>10} {:>11.6} {:>11.6}",
            x.h, x.r, x.s, x.rounds, x.bytes, x.comm_time_s, x.comp_time_s
        );
    }
    match &path {
        Some(p) => {
            let _ = write!(text, "{} samples on {}, written to {}", samples.len(), cfg.env.label, p.display());
        }
        None => {
            let _ = write!(text, "{} samples on {}", samples.len(), cfg.env.label);
        }
    }
    Ok(Output::new(&samples, text))
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Profile CSV (`h,r,s,comm_time_s,comp_time_s,rounds,bytes`).
    #[arg(long)]
    pub samples: PathBuf,
    /// Coefficient JSON output (default: `output_dir/coefficients.json`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_fit(cfg: &RunConfig, args: &FitArgs) -> Result<Output, CliError> {
    let samples: Vec<ProfileSample> = read_profile_csv(&args.samples)?;
    let c = fit_cost_model(&samples, &cfg.env.label)?;
    let path = cfg.output_path(args.out.as_deref(), "coefficients.json");
    if let Some(p) = &path {
        ensure_parent(p)?;
        write_coefficients(p, &c)?;
    }
    let row = |name: &str, v: &[f64; 4], r2: Option<f64>| {
        format!(
            "{name}  c1 {:.6}  c2 {:.6}  c3 {:.6}  c4 {:.6}  R^2 {}",
            v[0],
            v[1],
            v[2],
            v[3],
            r2.map_or("n/a".into(), |r| format!("{r:.4}"))
        )
    };
    let mut text = format!(
        "{} samples, {} model: latency = (c1 h + c2 r + c3) s + c4\n{}\n{}",
        samples.len(),
        c.env,
        row("comm", &c.comm.0, c.r2_comm),
        row("comp", &c.comp.0, c.r2_comp)
    );
    if let Some(p) = &path {
        let _ = write!(text, "\nwritten to {}", p.display());
    }
    Ok(Output::new(&c, text))
}

/// Configurations reported by default: the efficiency-first WAN picks.
pub const REPORT_CONFIGS: [Arch; 5] = [
    Arch::new(2, 120, 2),
    Arch::new(1, 300, 1),
    Arch::new(4, 180, 1),
    Arch::new(12, 300, 1),
    Arch::new(1, 180, 1),
];

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Configuration `h,r,s` to include; repeatable.
    #[arg(long = "arch")]
    pub archs: Vec<ArchArg>,
    #[command(flatten)]
    pub coefficients: CoefficientArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub config: String,
    pub rounds: u64,
    pub comm_gb: f64,
    pub latency_s: f64,
    /// Baseline rounds over this configuration's rounds.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub baseline: Baseline,
    pub baseline_source: String,
    pub comm_gb_source: String,
    pub latency_source: String,
    pub rows: Vec<ReportRow>,
}

pub fn report(archs: &[Arch], c: &CostCoefficients, label: &str) -> Report {
    Report {
        baseline: SFT_BASELINE,
        baseline_source: format!("{PUBLISHED} full fine-tuning under MPC"),
        comm_gb_source: format!("{PUBLISHED} traffic model"),
        latency_source: label.to_owned(),
        rows: archs
            .iter()
            .map(|&a| ReportRow {
                config: a.to_string(),
                rounds: estimate_rounds(a),
                comm_gb: estimate_comm_gb(a),
                latency_s: estimate_latency(a, c).total_s,
                speedup: round_speedup(a, &SFT_BASELINE),
            })
            .collect(),
    }
}

impl Report {
    pub fn render(&self) -> String {
        let b = &self.baseline;
        let mut t = format!(
            "{:<20} {:>7} {:>7} {:>14} {:>15}\n",
            "config", "rounds", "GB", "est. latency", "speedup vs SFT"
        );
        let _ = writeln!(
            t,
            "{:<20} {:>7} {:>7.2} {:>12.2} s {:>14.2}×  {PUBLISHED}",
            format!("{} baseline", b.name),
            b.rounds,
            b.comm_gb,
            b.wan_total_s,
            1.0
        );
        for r in &self.rows {
            let _ = writeln!(
                t,
                "{:<20} {:>7} {:>7.2} {:>12.2} s {:>14.2}×",
                r.config, r.rounds, r.comm_gb, r.latency_s, r.speedup
            );
        }
        let _ = write!(
            t,
            "baseline: {}\nGB: {}\nlatency: {}\nspeedup: {} baseline rounds / metered rounds",
            self.baseline_source, self.comm_gb_source, self.latency_source, b.rounds
        );
        t
    }
}

pub fn cmd_report(cfg: &RunConfig, args: &ReportArgs) -> Result<Output, CliError> {
    let archs: Vec<Arch> = if args.archs.is_empty() {
        REPORT_CONFIGS.to_vec()
    } else {
        args.archs.iter().map(|a| a.0).collect()
    };
    let (c, label) = coefficients(cfg, &args.coefficients)?;
    let r = report(&archs, &c, &label);
    let text = r.render();
    Ok(Output::new(&r, text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_skips_indivisible_pairs() {
        let g = profile_grid(&[1, 4], &[4, 6], &[1, 2]);
        assert_eq!(g.len(), 6);
        assert!(!g.contains(&Arch::new(4, 6, 1)));
    }

    #[test]
    fn report_rows_use_published_models() {
        let r = report(&REPORT_CONFIGS, &CostCoefficients::published_wan(), "wan");
        let got: Vec<String> = r.rows.iter().map(|x| format!("{:.2}", x.latency_s)).collect();
        assert_eq!(got, ["2.55", "2.24", "1.79", "2.66", "1.68"]);
        assert_eq!(r.rows[1].rounds, 29);
        assert!(r.render().contains("2.66×"));
    }

}
