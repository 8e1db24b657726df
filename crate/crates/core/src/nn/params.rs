use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use super::AdapterConfig;
use crate::error::{Error, Result};
use crate::ring::{FixedPointConfig, FixedTensor};

/// Parameter names of one adapter, in storage order.
pub const ADAPTER_PARAM_NAMES: [&str; 13] = [
    "down", "w_q", "w_k", "w_v", "w_l", "attn_out", "fc1", "fc2", "up", "ln1_gain", "ln1_bias",
    "ln2_gain", "ln2_bias",
];

/// One adapter's parameters. `T` is a shape, a plaintext tensor or a share.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterParams<T> {
    /// `[d_model, r]`
    pub down: T,
    /// `[r, r]` each
    pub w_q: T,
    pub w_k: T,
    pub w_v: T,
    /// `[N, N]`, shared by all heads
    pub w_l: T,
    /// `[r, r]`
    pub attn_out: T,
    /// `[r, 2r]`
    pub fc1: T,
    /// `[2r, r]`
    pub fc2: T,
    /// `[r, d_model]`
    pub up: T,
    /// `[r]` each
    pub ln1_gain: T,
    pub ln1_bias: T,
    pub ln2_gain: T,
    pub ln2_bias: T,
}

impl<T> AdapterParams<T> {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &T)> {
        let refs = [
            &self.down, &self.w_q, &self.w_k, &self.w_v, &self.w_l, &self.attn_out, &self.fc1,
            &self.fc2, &self.up, &self.ln1_gain, &self.ln1_bias, &self.ln2_gain, &self.ln2_bias,
        ];
        ADAPTER_PARAM_NAMES.into_iter().zip(refs)
    }

    fn from_iter(it: &mut impl Iterator<Item = T>) -> Option<Self> {
        Some(AdapterParams {
            down: it.next()?,
            w_q: it.next()?,
            w_k: it.next()?,
            w_v: it.next()?,
            w_l: it.next()?,
            attn_out: it.next()?,
            fc1: it.next()?,
            fc2: it.next()?,
            up: it.next()?,
            ln1_gain: it.next()?,
            ln1_bias: it.next()?,
            ln2_gain: it.next()?,
            ln2_bias: it.next()?,
        })
    }

    /// Builds the parameters from 13 tensors in [`ADAPTER_PARAM_NAMES`] order.
    pub fn from_vec(items: Vec<T>) -> Result<Self> {
        let n = items.len();
        let mut it = items.into_iter();
        match Self::from_iter(&mut it) {
            Some(p) if it.next().is_none() => Ok(p),
            _ => Err(Error::InvalidConfig(format!("adapter needs 13 tensors, got {n}"))),
        }
    }

    pub fn try_map<U>(&self, mut f: impl FnMut(&T) -> Result<U>) -> Result<AdapterParams<U>> {
        let mapped = self.iter().map(|(_, t)| f(t)).collect::<Result<Vec<_>>>()?;
        Ok(AdapterParams::from_iter(&mut mapped.into_iter()).expect("13 fields"))
    }
}

/// The full stack: `s` adapters, the tail norm and the classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineParams<T> {
    pub adapters: Vec<AdapterParams<T>>,
    /// `[d_model]` each
    pub final_gain: T,
    pub final_bias: T,
    /// `[d_model, n_classes]`
    pub classifier: T,
}

impl<T> PipelineParams<T> {
    /// Every tensor with its qualified name (`adapter0.down`, ..., `classifier`).
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        for (i, a) in self.adapters.iter().enumerate() {
            out.extend(a.iter().map(|(n, t)| (format!("adapter{i}.{n}"), t)));
        }
        out.push(("final_gain".into(), &self.final_gain));
        out.push(("final_bias".into(), &self.final_bias));
        out.push(("classifier".into(), &self.classifier));
        out
    }

    /// Rebuilds from tensors in [`named`](Self::named) order.
    pub fn from_vec(adapters: usize, items: Vec<T>) -> Result<Self> {
        let want = adapters * ADAPTER_PARAM_NAMES.len() + 3;
        if items.len() != want {
            return Err(Error::Format(format!(
                "{adapters} adapters need {want} tensors, got {}",
                items.len()
            )));
        }
        let mut it = items.into_iter();
        let adapters = (0..adapters)
            .map(|_| AdapterParams::from_iter(&mut it).expect("length checked"))
            .collect();
        Ok(PipelineParams {
            adapters,
            final_gain: it.next().expect("length checked"),
            final_bias: it.next().expect("length checked"),
            classifier: it.next().expect("length checked"),
        })
    }

    pub fn try_map<U>(&self, mut f: impl FnMut(&T) -> Result<U>) -> Result<PipelineParams<U>> {
        let mapped = self.named().into_iter().map(|(_, t)| f(t)).collect::<Result<Vec<_>>>()?;
        PipelineParams::from_vec(self.adapters.len(), mapped)
    }
}

impl PipelineParams<Vec<usize>> {
    /// Expected shape of every parameter for `cfg`.
    pub fn shapes(cfg: &AdapterConfig) -> Self {
        let (d, r, n, m) = (cfg.d_model, cfg.r, cfg.n_tokens, cfg.mlp_width());
        let adapter = AdapterParams {
            down: vec![d, r],
            w_q: vec![r, r],
            w_k: vec![r, r],
            w_v: vec![r, r],
            w_l: vec![n, n],
            attn_out: vec![r, r],
            fc1: vec![r, m],
            fc2: vec![m, r],
            up: vec![r, d],
            ln1_gain: vec![r],
            ln1_bias: vec![r],
            ln2_gain: vec![r],
            ln2_bias: vec![r],
        };
        PipelineParams {
            adapters: vec![adapter; cfg.s],
            final_gain: vec![d],
            final_bias: vec![d],
            classifier: vec![d, cfg.n_classes],
        }
    }
}

impl PipelineParams<FixedTensor> {
    /// Random weights scaled so activations stay near unit variance. The
    /// attention branch is a triple product with heavy tails, so `w_l` is
    /// drawn at half the variance-preserving scale.
    pub fn random(cfg: &AdapterConfig, fp: FixedPointConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (d, r, n) = (cfg.d_model as f64, cfg.r as f64, cfg.n_tokens as f64);
        let dh = cfg.head_dim() as f64;
        let shapes = PipelineParams::shapes(cfg);
        let mut draw = |shape: &[usize], mean: f64, std: f64| -> Result<FixedTensor> {
            let normal = Normal::new(mean, std).expect("finite std");
            let len: usize = shape.iter().product();
            let vals: Vec<f64> = (0..len).map(|_| normal.sample(&mut rng)).collect();
            FixedTensor::from_f64(shape, &vals, fp)
        };
        let mut adapters = Vec::with_capacity(cfg.s);
        for a in &shapes.adapters {
            adapters.push(AdapterParams {
                down: draw(&a.down, 0.0, d.sqrt().recip())?,
                w_q: draw(&a.w_q, 0.0, r.sqrt().recip())?,
                w_k: draw(&a.w_k, 0.0, r.sqrt().recip())?,
                w_v: draw(&a.w_v, 0.0, r.sqrt().recip())?,
                w_l: draw(&a.w_l, 0.0, 0.25 * (n * dh.sqrt()).recip())?,
                attn_out: draw(&a.attn_out, 0.0, 0.7 * r.sqrt().recip())?,
                fc1: draw(&a.fc1, 0.0, r.sqrt().recip())?,
                fc2: draw(&a.fc2, 0.0, (2.0 * r).sqrt().recip())?,
                up: draw(&a.up, 0.0, 0.5 * r.sqrt().recip())?,
                ln1_gain: draw(&a.ln1_gain, 1.0, 0.1)?,
                ln1_bias: draw(&a.ln1_bias, 0.0, 0.05)?,
                ln2_gain: draw(&a.ln2_gain, 1.0, 0.1)?,
                ln2_bias: draw(&a.ln2_bias, 0.0, 0.05)?,
            });
        }
        Ok(PipelineParams {
            adapters,
            final_gain: draw(&shapes.final_gain, 1.0, 0.1)?,
            final_bias: draw(&shapes.final_bias, 0.0, 0.05)?,
            classifier: draw(&shapes.classifier, 0.0, d.sqrt().recip())?,
        })
    }

    /// Checks every tensor against the shapes `cfg` implies.
    pub fn check_shapes(&self, cfg: &AdapterConfig) -> Result<()> {
        let want = PipelineParams::shapes(cfg);
        if want.adapters.len() != self.adapters.len() {
            return Err(Error::InvalidConfig(format!(
                "config has s = {} but weights hold {} adapters",
                cfg.s,
                self.adapters.len()
            )));
        }
        for ((name, t), (_, shape)) in self.named().into_iter().zip(want.named()) {
            if t.shape() != shape.as_slice() {
                return Err(Error::InvalidConfig(format!(
                    "{name} has shape {:?}, config implies {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Standard-normal token features `[N, d_model]`, standing in for backbone output.
pub fn random_features(cfg: &AdapterConfig, fp: FixedPointConfig, seed: u64) -> Result<FixedTensor> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let [n, d] = cfg.input_shape();
    let vals: Vec<f64> = (0..n * d)
        .map(|_| Normal::new(0.0, 1.0).expect("unit normal").sample(&mut rng))
        .collect();
    FixedTensor::from_f64(&[n, d], &vals, fp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_names() {
        let cfg = AdapterConfig::with_hrs(2, 8, 2).unwrap();
        let p = PipelineParams::random(&cfg, FixedPointConfig::default(), 1).unwrap();
        p.check_shapes(&cfg).unwrap();
        let names: Vec<String> = p.named().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), 29);
        assert_eq!(names[0], "adapter0.down");
        assert_eq!(names[13], "adapter1.down");
        assert_eq!(names[28], "classifier");
        let other = AdapterConfig::with_hrs(2, 4, 2).unwrap();
        assert!(p.check_shapes(&other).is_err());
    }

    #[test]
    fn map_roundtrip_and_determinism() {
        let cfg = AdapterConfig::default();
        let fp = FixedPointConfig::default();
        let p = PipelineParams::random(&cfg, fp, 3).unwrap();
        assert_eq!(p, PipelineParams::random(&cfg, fp, 3).unwrap());
        assert_ne!(p, PipelineParams::random(&cfg, fp, 4).unwrap());
        let copy = p.try_map(|t| Ok(t.clone())).unwrap();
        assert_eq!(copy, p);
        assert!(PipelineParams::<u8>::from_vec(1, vec![0; 15]).is_err());
    }
}
