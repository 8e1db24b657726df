//! Run configuration file.

use std::path::{Path, PathBuf};

use adapter_mpc::nn::AdapterConfig;
use adapter_mpc::ring::{FixedPointConfig, DEFAULT_FRAC_BITS};
use adapter_mpc::runtime::NetworkEnv;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointSection {
    pub frac_bits: u32,
}

impl Default for FixedPointSection {
    fn default() -> Self {
        FixedPointSection { frac_bits: DEFAULT_FRAC_BITS }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub label: String,
    pub bandwidth_mbps: f64,
    pub latency_ms: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        let wan = NetworkEnv::wan();
        EnvSection {
            label: wan.label,
            bandwidth_mbps: wan.bandwidth_bps / 1e6,
            latency_ms: wan.latency_s * 1e3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub weights_dir: Option<PathBuf>,
    pub features_file: Option<PathBuf>,
    pub utility_table: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

/// Every section is optional; missing ones take the desk defaults
/// (WAN link, `f = 16`, the default adapter, seed 0).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub fixed_point: FixedPointSection,
    pub adapter: AdapterConfig,
    pub env: EnvSection,
    pub paths: PathsSection,
    pub seed: u64,
}

impl RunConfig {
    /// Parses and validates a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.paths;
        for slot in [&mut p.weights_dir, &mut p.features_file, &mut p.utility_table, &mut p.output_dir] {
            if let Some(rel) = slot.as_ref().filter(|p| p.is_relative()) {
                *slot = Some(base.join(rel));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.adapter.validate()?;
        self.fixed_point()?;
        self.network()?;
        Ok(())
    }

    pub fn fixed_point(&self) -> Result<FixedPointConfig, CliError> {
        Ok(FixedPointConfig::new(self.fixed_point.frac_bits)?)
    }

    pub fn network(&self) -> Result<NetworkEnv, CliError> {
        Ok(NetworkEnv::new(
            self.env.label.clone(),
            self.env.bandwidth_mbps * 1e6,
            self.env.latency_ms * 1e-3,
        )?)
    }

    /// `explicit` if given, else `output_dir/name` when an output directory
    /// is configured.
    pub fn output_path(&self, explicit: Option<&Path>, name: &str) -> Option<PathBuf> {
        explicit
            .map(Path::to_path_buf)
            .or_else(|| self.paths.output_dir.as_ref().map(|d| d.join(name)))
    }
}
