use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the adapter stack: `h` heads, rank `r`, `s` stacked
/// adapters, the residual `scaler`, and the backbone dimensions it attaches to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdapterConfig {
    pub h: usize,
    pub r: usize,
    pub s: usize,
    pub scaler: f64,
    pub d_model: usize,
    pub n_tokens: usize,
    pub n_classes: usize,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            h: 2,
            r: 8,
            s: 1,
            scaler: 0.5,
            d_model: 32,
            n_tokens: 8,
            n_classes: 10,
        }
    }
}

impl AdapterConfig {
    /// Desk-scale dimensions with the given searchable triple.
    pub fn with_hrs(h: usize, r: usize, s: usize) -> Result<Self> {
        let cfg = AdapterConfig {
            h,
            r,
            s,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.h == 0 || self.r == 0 || self.s == 0 {
            return bad(format!("h, r and s must be at least 1, got ({}, {}, {})", self.h, self.r, self.s));
        }
        if self.r % self.h != 0 {
            return bad(format!("rank {} is not divisible by {} heads", self.r, self.h));
        }
        if !(0.0..=4.0).contains(&self.scaler) {
            return bad(format!("scaler must lie in [0, 4], got {}", self.scaler));
        }
        if self.d_model < 2 || self.n_tokens == 0 || self.n_classes == 0 {
            return bad(format!(
                "need d_model >= 2, n_tokens >= 1, n_classes >= 1, got {} / {} / {}",
                self.d_model, self.n_tokens, self.n_classes
            ));
        }
        Ok(())
    }

    /// Hidden width of the adapter MLP.
    pub fn mlp_width(&self) -> usize {
        2 * self.r
    }

    pub fn head_dim(&self) -> usize {
        self.r / self.h
    }

    /// Shape of the feature input `[N, d_model]`.
    pub fn input_shape(&self) -> [usize; 2] {
        [self.n_tokens, self.d_model]
    }
}
