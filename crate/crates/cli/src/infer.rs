//! `init`, `infer` and `verify`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use adapter_mpc::nn::io::{load_weights, save_weights};
use adapter_mpc::nn::{
    argmax, pipeline_forward_f64, private_inference_party, random_features, run_private_inference, to_real,
    AdapterConfig, PipelineParams, RealTensor,
};
use adapter_mpc::ring::io::{read_tensor_file, write_tensor_file, Dtype, TensorPayload};
use adapter_mpc::ring::{FixedPointConfig, FixedTensor};
use adapter_mpc::runtime::{
    simulate_latency, tcp_channel, CommMeter, NetworkEnv, Party, TransportKind, DEFAULT_TIMEOUT,
};
use adapter_mpc::Error;
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::{write_json, CliError, Output, RunConfig};

pub const FEATURES_FILE: &str = "features.bin";
pub const WEIGHTS_DIR: &str = "weights";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DtypeArg {
    F32,
    U64ring,
}

impl From<DtypeArg> for Dtype {
    fn from(d: DtypeArg) -> Self {
        match d {
            DtypeArg::F32 => Dtype::F32,
            DtypeArg::U64ring => Dtype::U64Ring,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InitArgs {
    /// Directory receiving `weights/` and `features.bin` (default: the
    /// configured output directory, else the current one).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Payload encoding of the written tensors.
    #[arg(long, value_enum, default_value = "u64ring")]
    pub dtype: DtypeArg,
}

#[derive(Debug, Serialize)]
pub struct InitReport {
    pub weights_dir: PathBuf,
    pub features_file: PathBuf,
    pub adapter: AdapterConfig,
    pub seed: u64,
}

/// Writes random weights (seeded by `seed`) and features (seeded by
/// `seed + 1`) for the configured adapter.
pub fn cmd_init(cfg: &RunConfig, args: &InitArgs) -> Result<Output, CliError> {
    let fp = cfg.fixed_point()?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.paths.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let weights_dir = out.join(WEIGHTS_DIR);
    let features_file = out.join(FEATURES_FILE);
    let weights = PipelineParams::random(&cfg.adapter, fp, cfg.seed)?;
    save_weights(&weights_dir, &cfg.adapter, &weights, args.dtype.into())?;
    let x = random_features(&cfg.adapter, fp, cfg.seed.wrapping_add(1))?;
    let payload = match Dtype::from(args.dtype) {
        Dtype::F32 => TensorPayload::F32(x.to_f64().iter().map(|&v| v as f32).collect()),
        Dtype::U64Ring => TensorPayload::Ring(x.ring().data().to_vec()),
    };
    write_tensor_file(&features_file, x.shape(), &payload)?;
    let report = InitReport { weights_dir, features_file, adapter: cfg.adapter.clone(), seed: cfg.seed };
    let text = format!(
        "wrote {} and {}",
        report.weights_dir.display(),
        report.features_file.display()
    );
    Ok(Output::new(&report, text))
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    /// Weights directory (default: `paths.weights_dir`). Needed in process
    /// and by party 1.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Features tensor file (default: `paths.features_file`). Needed in
    /// process and by party 0.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Play one party over TCP: 0 (model user) listens, 1 (model service) connects.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub role: Option<u8>,
    /// Address party 0 listens on and party 1 connects to.
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub addr: String,
    /// In process, route the two parties over loopback TCP instead of memory.
    #[arg(long, conflicts_with = "role")]
    pub tcp: bool,
    /// Also write the report to this file (default: `output_dir/infer_report.json`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferReport {
    /// Party whose view this is; `None` when both ran in this process.
    pub role: Option<u8>,
    /// Decoded logits, present at party 0 only.
    pub logits: Option<Vec<f64>>,
    pub argmax: Option<usize>,
    pub rounds: u64,
    /// Online payload bytes sent by both parties.
    pub bytes: u64,
    /// Communication time under the configured network model, seconds.
    pub simulated_comm_time: f64,
    /// Wall-clock time of the run in this process, seconds.
    pub wall_comp_time: f64,
}

impl InferReport {
    fn new(role: Option<u8>, logits: Option<&FixedTensor>, meter: &CommMeter, env: &NetworkEnv, wall: f64) -> Self {
        let logits = logits.map(FixedTensor::to_f64);
        InferReport {
            role,
            argmax: logits.as_deref().map(argmax),
            logits,
            rounds: meter.rounds(),
            bytes: meter.bytes_sent(),
            simulated_comm_time: simulate_latency(meter, env),
            wall_comp_time: wall,
        }
    }

    fn render(&self, env: &NetworkEnv) -> String {
        let mut t = String::new();
        if let Some(role) = self.role {
            let _ = writeln!(t, "party {role}");
        }
        if let (Some(l), Some(a)) = (&self.logits, self.argmax) {
            let shown: Vec<String> = l.iter().map(|v| format!("{v:.4}")).collect();
            let _ = writeln!(t, "logits  [{}]", shown.join(", "));
            let _ = writeln!(t, "argmax  {a}");
        }
        let _ = writeln!(t, "rounds  {}", self.rounds);
        let _ = writeln!(t, "bytes   {}", self.bytes);
        let _ = writeln!(t, "comm    {:.4} s simulated on {}", self.simulated_comm_time, env.label);
        let _ = write!(t, "wall    {:.4} s", self.wall_comp_time);
        t
    }
}

fn required(flag: Option<&PathBuf>, key: Option<&PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    flag.or(key)
        .cloned()
        .ok_or_else(|| CliError::Usage(format!("no {what} given (use the flag or set it under paths in the config)")))
}

/// Reads a features file into the run's fixed-point format and checks its shape.
pub fn load_features(path: &Path, cfg: &AdapterConfig, fp: FixedPointConfig) -> Result<FixedTensor, CliError> {
    let x = read_tensor_file(path, None)?.to_fixed(fp)?;
    if x.shape() != cfg.input_shape() {
        return Err(CliError::Usage(format!(
            "{} holds a {:?} tensor, the adapter expects {:?}",
            path.display(),
            x.shape(),
            cfg.input_shape()
        )));
    }
    Ok(x)
}

/// Loads weights and checks that they were saved for this fixed-point format.
fn load_checked_weights(dir: &Path, fp: FixedPointConfig) -> Result<(AdapterConfig, PipelineParams<FixedTensor>), CliError> {
    let (cfg, w) = load_weights(dir)?;
    let saved = w.named()[0].1.config();
    if saved != fp {
        return Err(Error::ConfigMismatch(saved.frac_bits(), fp.frac_bits()).into());
    }
    Ok((cfg, w))
}

/// Words both parties must agree on before running: architecture, format
/// and dealer seed.
fn fingerprint(cfg: &AdapterConfig, fp: FixedPointConfig, seed: u64) -> Vec<u64> {
    vec![
        cfg.h as u64,
        cfg.r as u64,
        cfg.s as u64,
        cfg.d_model as u64,
        cfg.n_tokens as u64,
        cfg.n_classes as u64,
        cfg.scaler.to_bits(),
        fp.frac_bits() as u64,
        seed,
    ]
}

/// The weights manifest defines the architecture wherever weights are
/// loaded; party 0, which holds none, takes it from the run config and the
/// TCP handshake confirms both sides agree.
pub fn cmd_infer(cfg: &RunConfig, args: &InferArgs) -> Result<Output, CliError> {
    let fp = cfg.fixed_point()?;
    let env = cfg.network()?;
    let weights_path = || required(args.weights.as_ref(), cfg.paths.weights_dir.as_ref(), "weights directory");
    let features_path = || required(args.features.as_ref(), cfg.paths.features_file.as_ref(), "features file");

    let report = match args.role {
        None => {
            let (acfg, weights) = load_checked_weights(&weights_path()?, fp)?;
            let x = load_features(&features_path()?, &acfg, fp)?;
            let kind = if args.tcp { TransportKind::TcpLoopback } else { TransportKind::InProcess };
            let start = Instant::now();
            let run = run_private_inference(kind, &acfg, cfg.seed, &x, &weights)?;
            let wall = start.elapsed().as_secs_f64();
            InferReport::new(None, Some(&run.logits), &run.meter(), &env, wall)
        }
        Some(role) => {
            let party = Party::from_index(role as usize)?;
            let (acfg, weights, x) = match party {
                Party::Zero => {
                    let x = load_features(&features_path()?, &cfg.adapter, fp)?;
                    (cfg.adapter.clone(), None, Some(x))
                }
                Party::One => {
                    let (acfg, w) = load_checked_weights(&weights_path()?, fp)?;
                    (acfg, Some(w), None)
                }
            };
            let mut ch = tcp_channel(party, &args.addr, DEFAULT_TIMEOUT)?;
            let mine = fingerprint(&acfg, fp, cfg.seed);
            let theirs = ch.control(&mine)?;
            if theirs != mine {
                return Err(CliError::Usage(format!(
                    "party configs differ (h, r, s, d_model, n_tokens, n_classes, scaler bits, frac_bits, seed): \
                     ours {mine:?}, peer {theirs:?}"
                )));
            }
            let start = Instant::now();
            let logits = private_inference_party(&mut ch, &acfg, fp, cfg.seed, x.as_ref(), weights.as_ref())?;
            let wall = start.elapsed().as_secs_f64();
            let own = ch.take_meter();
            let peer = ch.control(&[own.rounds(), own.bytes_sent()])?;
            let [rounds, bytes] = peer[..] else {
                return Err(Error::Protocol(format!("peer sent {} meter words, expected 2", peer.len())).into());
            };
            let meter = CommMeter::combine(&own, &CommMeter::from_totals(rounds, bytes));
            InferReport::new(Some(role), logits.as_ref(), &meter, &env, wall)
        }
    };
    if let Some(path) = cfg.output_path(args.out.as_deref(), "infer_report.json") {
        write_json(&path, &report)?;
    }
    let text = report.render(&env);
    Ok(Output::new(&report, text))
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Number of seeded random inputs.
    #[arg(long, default_value_t = 100)]
    pub inputs: u64,
    /// Largest tolerated absolute logit error.
    #[arg(long, default_value_t = 1e-2)]
    pub tolerance: f64,
    /// Smallest tolerated fraction of inputs with matching argmax.
    #[arg(long, default_value_t = 0.98)]
    pub min_agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub adapter: AdapterConfig,
    pub inputs: u64,
    pub max_abs_error: f64,
    /// Seed of the input with the largest error.
    pub worst_seed: u64,
    pub agreement: f64,
    pub tolerance: f64,
    pub min_agreement: f64,
    pub rounds: u64,
    pub passed: bool,
    pub wall_time: f64,
}

/// Private logits against the double-precision pipeline. Weights come from
/// `seed`, input `i` from `seed + 1 + i`, which also seeds its dealer.
pub fn verify(adapter: &AdapterConfig, fp: FixedPointConfig, seed: u64, args: &VerifyArgs) -> Result<VerifyReport, CliError> {
    if args.inputs == 0 {
        return Err(CliError::Usage("verify needs at least one input".into()));
    }
    let start = Instant::now();
    let weights = PipelineParams::random(adapter, fp, seed)?;
    let real = to_real(&weights);
    let (mut worst, mut worst_seed, mut agree, mut rounds) = (0.0f64, seed, 0u64, 0);
    for i in 0..args.inputs {
        let input_seed = seed.wrapping_add(1 + i);
        let x = random_features(adapter, fp, input_seed)?;
        let run = run_private_inference(TransportKind::InProcess, adapter, input_seed, &x, &weights)?;
        let reference = pipeline_forward_f64(&RealTensor::from_fixed(&x), &real, adapter)?;
        let got = run.logits.to_f64();
        let err = got.iter().zip(reference.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if err > worst || err.is_nan() {
            worst = err;
            worst_seed = input_seed;
        }
        agree += u64::from(argmax(&got) == argmax(reference.data()));
        rounds = run.meter().rounds();
    }
    let agreement = agree as f64 / args.inputs as f64;
    Ok(VerifyReport {
        adapter: adapter.clone(),
        inputs: args.inputs,
        max_abs_error: worst,
        worst_seed,
        agreement,
        tolerance: args.tolerance,
        min_agreement: args.min_agreement,
        rounds,
        passed: worst <= args.tolerance && agreement >= args.min_agreement,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

pub fn cmd_verify(cfg: &RunConfig, args: &VerifyArgs) -> Result<Output, CliError> {
    let r = verify(&cfg.adapter, cfg.fixed_point()?, cfg.seed, args)?;
    let text = format!(
        "{} inputs, max |error| {:.3e} (tolerance {:.0e}), argmax agreement {:.1}% (need {:.1}%), {} rounds, {:.2} s\n{}",
        r.inputs,
        r.max_abs_error,
        r.tolerance,
        100.0 * r.agreement,
        100.0 * r.min_agreement,
        r.rounds,
        r.wall_time,
        if r.passed { "PASS" } else { "FAIL" }
    );
    let mut out = Output::new(&r, text);
    if !r.passed {
        out.failure = Some(format!(
            "verification failed: max |error| {:.3e}, agreement {:.1}%; worst input seed {}",
            r.max_abs_error,
            100.0 * r.agreement,
            r.worst_seed
        ));
    }
    Ok(out)
}
