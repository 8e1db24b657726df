//! End-to-end private inference between the model user (party 0, holds the
//! features) and the model service (party 1, holds the weights).

use super::ops::pipeline_forward_private;
use super::params::PipelineParams;
use super::AdapterConfig;
use crate::error::{Error, Result};
use crate::ring::{FixedPointConfig, FixedTensor};
use crate::runtime::{run_two_party, Channel, CommMeter, Party, TransportKind};
use crate::sharing::{ArithShare, Session};

/// Secret-shares the weights held by `owner` during setup (offline traffic).
pub fn share_params(
    s: &mut Session<'_>,
    owner: Party,
    params: Option<&PipelineParams<FixedTensor>>,
    cfg: &AdapterConfig,
) -> Result<PipelineParams<ArithShare>> {
    if let Some(p) = params {
        p.check_shapes(cfg)?;
    }
    let shapes = PipelineParams::shapes(cfg);
    let values: Vec<Option<&FixedTensor>> = match params {
        Some(p) => p.named().into_iter().map(|(_, t)| Some(t)).collect(),
        None => vec![None; shapes.named().len()],
    };
    let shares = shapes
        .named()
        .into_iter()
        .zip(values)
        .map(|((_, shape), v)| s.input(owner, v, shape, true))
        .collect::<Result<Vec<_>>>()?;
    PipelineParams::from_vec(cfg.s, shares)
}

/// One party's side of a private inference. Party 0 passes the features and
/// receives the logits; party 1 passes the weights and receives `None`.
pub fn private_inference_party(
    ch: &mut Channel,
    cfg: &AdapterConfig,
    fp: FixedPointConfig,
    seed: u64,
    features: Option<&FixedTensor>,
    weights: Option<&PipelineParams<FixedTensor>>,
) -> Result<Option<FixedTensor>> {
    cfg.validate()?;
    let party = ch.party();
    match party {
        Party::Zero if features.is_none() => {
            return Err(Error::InvalidConfig("party 0 needs the input features".into()))
        }
        Party::One if weights.is_none() => {
            return Err(Error::InvalidConfig("party 1 needs the adapter weights".into()))
        }
        _ => {}
    }
    let mut s = Session::new(ch, seed, fp);
    let w = share_params(&mut s, Party::One, weights, cfg)?;
    let x = s.input(Party::Zero, features, &cfg.input_shape(), false)?;
    let logits = pipeline_forward_private(&x, &w, cfg, &mut s)?;
    s.reveal_to(&logits, Party::Zero)
}

#[derive(Clone, Debug)]
pub struct InferenceRun {
    pub logits: FixedTensor,
    pub meter0: CommMeter,
    pub meter1: CommMeter,
}

impl InferenceRun {
    /// Both parties' traffic: shared rounds, summed bytes.
    pub fn meter(&self) -> CommMeter {
        CommMeter::combine(&self.meter0, &self.meter1)
    }
}

/// Runs both parties in this process over `kind`.
pub fn run_private_inference(
    kind: TransportKind,
    cfg: &AdapterConfig,
    seed: u64,
    features: &FixedTensor,
    weights: &PipelineParams<FixedTensor>,
) -> Result<InferenceRun> {
    let fp = features.config();
    let run = run_two_party(
        kind,
        |ch| private_inference_party(ch, cfg, fp, seed, Some(features), None),
        |ch| private_inference_party(ch, cfg, fp, seed, None, Some(weights)),
    )?;
    Ok(InferenceRun {
        logits: run.out0.ok_or_else(|| Error::Protocol("party 0 received no logits".into()))?,
        meter0: run.meter0,
        meter1: run.meter1,
    })
}

/// Index of the largest entry (first one on ties).
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}
