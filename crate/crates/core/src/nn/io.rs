//! Weights directory: `manifest.json` listing every tensor, and `weights.bin`
//! holding the tensors back to back in manifest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::PipelineParams;
use super::AdapterConfig;
use crate::error::{Error, Result};
use crate::ring::io::{read_tensor, write_tensor, Dtype, TensorPayload};
use crate::ring::{FixedPointConfig, FixedTensor};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: Dtype,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub adapter: AdapterConfig,
    pub frac_bits: u32,
    pub tensors: Vec<TensorEntry>,
}

/// Writes `params` to `dir` (created if missing). Ring payloads are exact;
/// `f32` payloads are convenient for external tools.
pub fn save_weights(
    dir: &Path,
    cfg: &AdapterConfig,
    params: &PipelineParams<FixedTensor>,
    dtype: Dtype,
) -> Result<()> {
    params.check_shapes(cfg)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let named = params.named();
    let fp = named[0].1.config();
    let manifest = Manifest {
        adapter: cfg.clone(),
        frac_bits: fp.frac_bits(),
        tensors: named
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
                dtype,
            })
            .collect(),
    };
    let mpath = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&mpath, json).map_err(|e| Error::io(&mpath, e))?;

    let wpath = dir.join(WEIGHTS_FILE);
    let mut w = BufWriter::new(File::create(&wpath).map_err(|e| Error::io(&wpath, e))?);
    for (_, t) in &named {
        let payload = match dtype {
            Dtype::U64Ring => TensorPayload::Ring(t.ring().data().to_vec()),
            Dtype::F32 => TensorPayload::F32(t.to_f64().into_iter().map(|v| v as f32).collect()),
        };
        write_tensor(&mut w, t.shape(), &payload)?;
    }
    w.flush().map_err(|e| Error::io(&wpath, e))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let m: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", mpath.display())))?;
    m.adapter.validate()?;
    Ok(m)
}

/// Loads a weights directory, checking names and shapes against its config.
pub fn load_weights(dir: &Path) -> Result<(AdapterConfig, PipelineParams<FixedTensor>)> {
    let m = read_manifest(dir)?;
    let fp = FixedPointConfig::new(m.frac_bits)?;
    let expected = PipelineParams::shapes(&m.adapter);
    let expected = expected.named();
    if expected.len() != m.tensors.len() {
        return Err(Error::Format(format!(
            "manifest lists {} tensors, config needs {}",
            m.tensors.len(),
            expected.len()
        )));
    }
    let wpath = dir.join(WEIGHTS_FILE);
    let mut r = BufReader::new(File::open(&wpath).map_err(|e| Error::io(&wpath, e))?);
    let mut tensors = Vec::with_capacity(m.tensors.len());
    for (entry, (name, shape)) in m.tensors.iter().zip(&expected) {
        if &entry.name != name || &entry.shape != *shape {
            return Err(Error::Format(format!(
                "manifest entry {} {:?} does not match expected {name} {shape:?}",
                entry.name, entry.shape
            )));
        }
        let raw = read_tensor(&mut r, entry.dtype)?;
        if raw.shape != entry.shape {
            return Err(Error::Format(format!(
                "{}: file holds shape {:?}, manifest says {:?}",
                entry.name, raw.shape, entry.shape
            )));
        }
        tensors.push(raw.to_fixed(fp)?);
    }
    let params = PipelineParams::from_vec(m.adapter.s, tensors)?;
    Ok((m.adapter, params))
}
