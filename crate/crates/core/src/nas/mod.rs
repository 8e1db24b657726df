//! Latency-constrained search over `(h, r, s)`: a sampling controller picks
//! `(h, r)` for each adapter count `s`, infeasible picks are penalised
//! without evaluation, and the search stops as soon as a feasible pick meets
//! the utility target. [`brute_force_search`] is the exhaustive oracle.

mod controller;
mod evaluator;

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cost::{estimate_latency, Arch, CostCoefficients};
use crate::error::{Error, Result};

pub use controller::{Controller, ControllerConfig, ControllerMode};
pub use evaluator::{CommandEvaluator, FnEvaluator, TableEvaluator, UtilityEvaluator};

/// Modeled end-to-end latency of a configuration, in seconds.
pub trait LatencyModel {
    fn latency(&self, a: Arch) -> f64;
}

impl LatencyModel for CostCoefficients {
    fn latency(&self, a: Arch) -> f64 {
        estimate_latency(a, self).total_s
    }
}

impl<F: Fn(Arch) -> f64> LatencyModel for F {
    fn latency(&self, a: Arch) -> f64 {
        self(a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub heads: Vec<usize>,
    pub ranks: Vec<usize>,
    pub max_s: usize,
    /// Reference pair for the escalation test; defaults to the smallest
    /// head count and rank.
    pub h_init: usize,
    pub r_init: usize,
    /// Adapter increment.
    pub delta: usize,
}

impl SearchSpace {
    pub fn new(heads: Vec<usize>, ranks: Vec<usize>, max_s: usize) -> Result<Self> {
        let h_init = heads.iter().copied().min().unwrap_or(0);
        let r_init = ranks.iter().copied().min().unwrap_or(0);
        let space = SearchSpace { heads, ranks, max_s, h_init, r_init, delta: 1 };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads.is_empty() || self.ranks.is_empty() || self.max_s == 0 {
            return Err(Error::EmptySpace("heads, ranks and max_s must be nonempty".into()));
        }
        if self.heads.contains(&0) || self.ranks.contains(&0) || self.delta == 0 {
            return Err(Error::InvalidConfig("heads, ranks and delta must be positive".into()));
        }
        if self.valid_pairs().is_empty() {
            return Err(Error::EmptySpace("no rank is divisible by any head count".into()));
        }
        Ok(())
    }

    /// `(h, r)` pairs with `r` divisible by `h`, in `(h, r)` order.
    pub fn valid_pairs(&self) -> Vec<(usize, usize)> {
        let mut heads = self.heads.clone();
        let mut ranks = self.ranks.clone();
        heads.sort_unstable();
        heads.dedup();
        ranks.sort_unstable();
        ranks.dedup();
        heads
            .iter()
            .flat_map(|&h| ranks.iter().filter(move |&&r| r % h == 0).map(move |&r| (h, r)))
            .collect()
    }

    /// Adapter counts visited by the outer loop.
    pub fn adapter_counts(&self) -> impl Iterator<Item = usize> {
        (1..=self.max_s).step_by(self.delta)
    }

    pub fn configs(&self) -> Vec<Arch> {
        let pairs = self.valid_pairs();
        self.adapter_counts()
            .flat_map(|s| pairs.iter().map(move |&(h, r)| Arch::new(h, r, s)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchTargets {
    pub utility: f64,
    pub latency_s: f64,
    /// Consecutive non-improving samples tolerated before moving to the next `s`.
    pub patience: usize,
}

impl SearchTargets {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.utility) || !(self.latency_s > 0.0) || self.patience == 0 {
            return Err(Error::InvalidConfig(format!(
                "targets need utility in [0, 1], latency > 0 and patience > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Found {
    #[serde(flatten)]
    pub arch: Arch,
    pub utility: f64,
    pub latency_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchOutcome {
    /// Best configuration evaluated, if any.
    pub best: Option<Found>,
    pub met_target: bool,
    /// Controller draws made.
    pub samples: usize,
    /// Every configuration handed to the evaluator, in call order.
    pub evaluated: Vec<Arch>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchOptions {
    pub controller: ControllerConfig,
    /// Hard cap on controller draws over the whole search.
    pub max_samples: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            controller: ControllerConfig::default(),
            max_samples: 10_000,
        }
    }
}

/// Order used to rank equally fast configurations: fewer adapters, then a
/// smaller `h r`, then fewer heads.
fn tie_key(a: Arch) -> (usize, usize, usize) {
    (a.s, a.h * a.r, a.h)
}

fn by_latency(x: &(Arch, f64), y: &(Arch, f64)) -> Ordering {
    x.1.total_cmp(&y.1).then_with(|| tie_key(x.0).cmp(&tie_key(y.0)))
}

/// The controller-driven search.
///
/// For each adapter count `s`, a drawn pair is skipped (reward `1/latency`)
/// when its latency exceeds the target or the reference pair's latency at
/// `s + delta`; otherwise it is evaluated (reward `U + 1/latency`). Every draw
/// counts towards the patience, an improvement of the best utility resets
/// it, and the search returns as soon as the best utility reaches the target.
/// The exhaustive mode visits pairs in increasing latency at each `s`.
pub fn nas_search(
    targets: &SearchTargets,
    latency: &impl LatencyModel,
    space: &SearchSpace,
    evaluator: &mut impl UtilityEvaluator,
    opts: &SearchOptions,
    seed: u64,
) -> Result<SearchOutcome> {
    targets.validate()?;
    space.validate()?;
    let pairs = space.valid_pairs();
    let mut ctl = Controller::new(pairs.clone(), opts.controller, seed)?;
    let mut cache: HashMap<Arch, f64> = HashMap::new();
    let mut out = SearchOutcome { best: None, met_target: false, samples: 0, evaluated: Vec::new() };

    for s in space.adapter_counts() {
        if ctl.mode() == ControllerMode::Exhaustive {
            let mut order: Vec<(usize, (Arch, f64))> = pairs
                .iter()
                .enumerate()
                .map(|(i, &(h, r))| {
                    let a = Arch::new(h, r, s);
                    (i, (a, latency.latency(a)))
                })
                .collect();
            order.sort_by(|x, y| by_latency(&x.1, &y.1));
            ctl.set_cycle(order.into_iter().map(|(i, _)| i).collect());
        }
        let escalate = latency.latency(Arch::new(space.h_init, space.r_init, s + space.delta));
        let mut tau = 0;
        while tau < targets.patience {
            if out.samples >= opts.max_samples {
                return Ok(out);
            }
            out.samples += 1;
            let i = ctl.sample_index();
            let (h, r) = pairs[i];
            let a = Arch::new(h, r, s);
            let lat = latency.latency(a);
            let reward;
            tau += 1;
            if lat > escalate || lat > targets.latency_s {
                reward = 1.0 / lat;
            } else {
                let u = match cache.get(&a) {
                    Some(&u) => u,
                    None => {
                        let u = evaluator.evaluate(a)?;
                        out.evaluated.push(a);
                        cache.insert(a, u);
                        u
                    }
                };
                reward = u + 1.0 / lat;
                if out.best.is_none_or(|b| u > b.utility) {
                    out.best = Some(Found { arch: a, utility: u, latency_s: lat });
                    tau = 0;
                }
                if out.best.is_some_and(|b| b.utility >= targets.utility) {
                    out.met_target = true;
                    return Ok(out);
                }
            }
            ctl.update(i, reward)?;
        }
    }
    Ok(out)
}

/// Evaluates every configuration within the latency target. Returns the
/// fastest one meeting the utility target, or else the highest-utility one;
/// `None` when no configuration fits the latency target.
pub fn brute_force_search(
    targets: &SearchTargets,
    latency: &impl LatencyModel,
    space: &SearchSpace,
    evaluator: &mut impl UtilityEvaluator,
) -> Result<Option<Found>> {
    targets.validate()?;
    space.validate()?;
    let mut feasible = Vec::new();
    for a in space.configs() {
        let lat = latency.latency(a);
        if lat <= targets.latency_s {
            feasible.push(Found { arch: a, utility: evaluator.evaluate(a)?, latency_s: lat });
        }
    }
    let fastest_meeting = feasible
        .iter()
        .filter(|f| f.utility >= targets.utility)
        .min_by(|x, y| by_latency(&(x.arch, x.latency_s), &(y.arch, y.latency_s)));
    let best_utility = || {
        feasible.iter().max_by(|x, y| {
            x.utility
                .total_cmp(&y.utility)
                .then_with(|| by_latency(&(y.arch, y.latency_s), &(x.arch, x.latency_s)))
        })
    };
    Ok(fastest_meeting.or_else(best_utility).copied())
}
