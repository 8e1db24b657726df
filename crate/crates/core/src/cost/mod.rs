//! Closed-form cost model: round and traffic formulas, the affine latency
//! model `(c1 h + c2 r + c3) s + c4`, profiling of the real engine and
//! least-squares fitting of the latency coefficients.

mod fit;
mod profile;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ADAPTER_ROUNDS, TAIL_ROUNDS};

pub use fit::{fit_cost_model, synthesize_samples};
pub use profile::{
    profile_pipeline, read_coefficients, read_profile_csv, write_coefficients, write_profile_csv, ProfileSample,
};

/// The searchable hyperparameters: heads, low-rank width, stacked adapters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Arch {
    pub h: usize,
    pub r: usize,
    pub s: usize,
}

impl Arch {
    pub const fn new(h: usize, r: usize, s: usize) -> Self {
        Arch { h, r, s }
    }

    /// Heads must divide the rank and every field must be positive.
    pub fn is_valid(&self) -> bool {
        self.h >= 1 && self.r >= 1 && self.s >= 1 && self.r % self.h == 0
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h={} r={} s={}", self.h, self.r, self.s)
    }
}

/// Coefficients `[c1, c2, c3, c4]` of `(c1 h + c2 r + c3) s + c4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Affine(pub [f64; 4]);

impl Affine {
    pub fn eval(&self, a: Arch) -> f64 {
        let [c1, c2, c3, c4] = self.0;
        (c1 * a.h as f64 + c2 * a.r as f64 + c3) * a.s as f64 + c4
    }
}

/// Published traffic model, in GB.
pub const COMM_GB: Affine = Affine([0.001153, 0.000187, 0.000578, 0.005692]);
/// Published WAN communication-time model, in seconds.
pub const WAN_COMM: Affine = Affine([0.02117, 0.00344, 0.35828, 0.15541]);
/// Published WAN computation-time model, in seconds.
pub const WAN_COMP: Affine = Affine([0.01711, 0.00121, 0.12311, 0.16581]);

/// Latency coefficients for one network environment, with the fit quality
/// when they were estimated from profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostCoefficients {
    pub env: String,
    pub comm: Affine,
    pub comp: Affine,
    #[serde(default)]
    pub r2_comm: Option<f64>,
    #[serde(default)]
    pub r2_comp: Option<f64>,
}

impl CostCoefficients {
    pub fn published_wan() -> Self {
        CostCoefficients {
            env: "WAN".into(),
            comm: WAN_COMM,
            comp: WAN_COMP,
            r2_comm: None,
            r2_comp: None,
        }
    }

    /// Bundled coefficients by environment label. Only WAN ships; other
    /// environments must be profiled and fitted.
    pub fn published(env: &str) -> Result<Self> {
        if env.eq_ignore_ascii_case("WAN") {
            Ok(Self::published_wan())
        } else {
            Err(Error::UnknownEnv(env.to_owned()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LatencyEstimate {
    pub comm_s: f64,
    pub comp_s: f64,
    pub total_s: f64,
}

pub fn estimate_rounds(a: Arch) -> u64 {
    ADAPTER_ROUNDS * a.s as u64 + TAIL_ROUNDS
}

pub fn estimate_comm_gb(a: Arch) -> f64 {
    COMM_GB.eval(a)
}

pub fn estimate_latency(a: Arch, c: &CostCoefficients) -> LatencyEstimate {
    let comm_s = c.comm.eval(a);
    let comp_s = c.comp.eval(a);
    LatencyEstimate {
        comm_s,
        comp_s,
        total_s: comm_s + comp_s,
    }
}

/// Published figures for full fine-tuning of the whole backbone under MPC.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Baseline {
    pub name: &'static str,
    pub comm_gb: f64,
    pub rounds: u64,
    pub wan_comm_s: f64,
    pub wan_total_s: f64,
}

pub const SFT_BASELINE: Baseline = Baseline {
    name: "SFT",
    comm_gb: 1.55,
    rounds: 77,
    wan_comm_s: 34.42,
    wan_total_s: 45.38,
};

/// How many times fewer rounds `a` needs than the baseline.
pub fn round_speedup(a: Arch, baseline: &Baseline) -> f64 {
    baseline.rounds as f64 / estimate_rounds(a) as f64
}
