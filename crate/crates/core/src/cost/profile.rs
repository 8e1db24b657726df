use std::fs::File;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Arch, CostCoefficients};
use crate::error::{Error, Result};
use crate::nn::{random_features, run_private_inference, AdapterConfig, PipelineParams};
use crate::ring::FixedPointConfig;
use crate::runtime::{simulate_latency, NetworkEnv, TransportKind};

/// One profiled configuration. Field order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub h: usize,
    pub r: usize,
    pub s: usize,
    pub comm_time_s: f64,
    pub comp_time_s: f64,
    pub rounds: u64,
    pub bytes: u64,
}

impl ProfileSample {
    pub fn arch(&self) -> Arch {
        Arch::new(self.h, self.r, self.s)
    }

    fn validate(&self) -> Result<()> {
        if !(self.comm_time_s >= 0.0 && self.comp_time_s >= 0.0) {
            return Err(Error::Format(format!(
                "profile sample {} has negative or NaN times",
                self.arch()
            )));
        }
        Ok(())
    }
}

/// Runs the private pipeline once per configuration. `base` supplies the
/// model dimensions; weights and features are drawn from `seed`.
/// Communication time comes from the network model, computation time from
/// the wall clock.
pub fn profile_pipeline(
    grid: &[Arch],
    base: &AdapterConfig,
    fp: FixedPointConfig,
    env: &NetworkEnv,
    kind: TransportKind,
    seed: u64,
) -> Result<Vec<ProfileSample>> {
    grid.iter()
        .map(|a| {
            let cfg = AdapterConfig { h: a.h, r: a.r, s: a.s, ..base.clone() };
            cfg.validate()?;
            let weights = PipelineParams::random(&cfg, fp, seed)?;
            let features = random_features(&cfg, fp, seed)?;
            let start = Instant::now();
            let run = run_private_inference(kind, &cfg, seed, &features, &weights)?;
            let comp_time_s = start.elapsed().as_secs_f64();
            let meter = run.meter();
            Ok(ProfileSample {
                h: a.h,
                r: a.r,
                s: a.s,
                comm_time_s: simulate_latency(&meter, env),
                comp_time_s,
                rounds: meter.rounds(),
                bytes: meter.bytes_sent(),
            })
        })
        .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked is_io_error"),
        }
    } else {
        Error::Format(format!("{}: {e}", path.display()))
    }
}

/// Writes samples as CSV with header `h,r,s,comm_time_s,comp_time_s,rounds,bytes`.
pub fn write_profile_csv(path: &Path, samples: &[ProfileSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for s in samples {
        w.serialize(s).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_profile_csv(path: &Path) -> Result<Vec<ProfileSample>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let samples = r
        .deserialize()
        .collect::<std::result::Result<Vec<ProfileSample>, _>>()
        .map_err(|e| csv_err(path, e))?;
    samples.iter().try_for_each(ProfileSample::validate)?;
    Ok(samples)
}

/// Writes `{env, comm: [c1..c4], comp: [...], r2_comm, r2_comp}`.
pub fn write_coefficients(path: &Path, c: &CostCoefficients) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(file, c).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn read_coefficients(path: &Path) -> Result<CostCoefficients> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(file).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
