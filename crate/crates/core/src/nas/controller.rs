use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerMode {
    /// Softmax policy over `(h, r)` trained with REINFORCE.
    Reinforce,
    /// Deterministic cycle through the pairs in a caller-chosen order.
    Exhaustive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub mode: ControllerMode,
    pub lr: f64,
    pub temperature: f64,
    /// Decay of the moving-average reward baseline.
    pub baseline_decay: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            mode: ControllerMode::Reinforce,
            lr: 0.1,
            temperature: 1.0,
            baseline_decay: 0.9,
        }
    }
}

/// Sampling policy over the valid `(h, r)` pairs: `softmax(theta / T)`.
#[derive(Clone, Debug)]
pub struct Controller {
    pairs: Vec<(usize, usize)>,
    theta: Vec<f64>,
    cfg: ControllerConfig,
    baseline: Option<f64>,
    rng: ChaCha20Rng,
    cycle: Vec<usize>,
    cursor: usize,
}

impl Controller {
    pub fn new(pairs: Vec<(usize, usize)>, cfg: ControllerConfig, seed: u64) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptySpace("controller has no valid (h, r) pair".into()));
        }
        if !(cfg.temperature > 0.0) || !cfg.lr.is_finite() || !(0.0..1.0).contains(&cfg.baseline_decay) {
            return Err(Error::InvalidConfig(format!("bad controller settings {cfg:?}")));
        }
        let n = pairs.len();
        Ok(Controller {
            pairs,
            theta: vec![0.0; n],
            cfg,
            baseline: None,
            rng: ChaCha20Rng::seed_from_u64(seed),
            cycle: (0..n).collect(),
            cursor: 0,
        })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn baseline(&self) -> Option<f64> {
        self.baseline
    }

    pub fn mode(&self) -> ControllerMode {
        self.cfg.mode
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let t = self.cfg.temperature;
        let max = self.theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.theta.iter().map(|v| ((v - max) / t).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }

    /// Sets the visiting order of the exhaustive cycle and restarts it.
    pub fn set_cycle(&mut self, order: Vec<usize>) {
        debug_assert!(order.iter().all(|&i| i < self.pairs.len()));
        self.cycle = order;
        self.cursor = 0;
    }

    /// Index of the next pair to try.
    pub fn sample_index(&mut self) -> usize {
        match self.cfg.mode {
            ControllerMode::Reinforce => {
                let dist = WeightedIndex::new(self.probabilities()).expect("softmax weights are positive");
                dist.sample(&mut self.rng)
            }
            ControllerMode::Exhaustive => {
                let i = self.cycle[self.cursor % self.cycle.len()];
                self.cursor += 1;
                i
            }
        }
    }

    pub fn sample(&mut self) -> (usize, usize) {
        let i = self.sample_index();
        self.pairs[i]
    }

    /// `theta[i] += lr (reward - baseline)`, then folds the reward into the
    /// moving-average baseline. The first reward only seeds the baseline.
    /// The exhaustive mode ignores rewards.
    pub fn update(&mut self, i: usize, reward: f64) -> Result<()> {
        if !reward.is_finite() {
            return Err(Error::InvalidConfig(format!("reward must be finite, got {reward}")));
        }
        if self.cfg.mode == ControllerMode::Exhaustive {
            return Ok(());
        }
        let base = *self.baseline.get_or_insert(reward);
        self.theta[i] += self.cfg.lr * (reward - base);
        let d = self.cfg.baseline_decay;
        self.baseline = Some(d * base + (1.0 - d) * reward);
        Ok(())
    }
}
