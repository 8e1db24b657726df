//! Little-endian tensor container shared by weight and feature files.
//!
//! Layout: `"CPFT"`, version `u16 = 1`, rank `u16`, `rank x u64` dims, then
//! the payload. The payload dtype is not stored in the header; it comes from
//! the weights manifest, or for a standalone file is inferred from its length.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FixedPointConfig, FixedTensor, RingTensor};
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: [u8; 4] = *b"CPFT";
pub const TENSOR_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "f32")]
    F32,
    #[serde(rename = "u64ring")]
    U64Ring,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U64Ring => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorPayload {
    F32(Vec<f32>),
    Ring(Vec<u64>),
}

impl TensorPayload {
    pub fn dtype(&self) -> Dtype {
        match self {
            TensorPayload::F32(_) => Dtype::F32,
            TensorPayload::Ring(_) => Dtype::U64Ring,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorPayload::F32(v) => v.len(),
            TensorPayload::Ring(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawTensor {
    pub shape: Vec<usize>,
    pub payload: TensorPayload,
}

impl RawTensor {
    /// f32 payloads are encoded at `cfg`; ring payloads are taken verbatim.
    pub fn to_fixed(&self, cfg: FixedPointConfig) -> Result<FixedTensor> {
        match &self.payload {
            TensorPayload::F32(v) => {
                let vals: Vec<f64> = v.iter().map(|&x| x as f64).collect();
                FixedTensor::from_f64(&self.shape, &vals, cfg)
            }
            TensorPayload::Ring(v) => Ok(FixedTensor::from_ring(
                RingTensor::new(self.shape.clone(), v.clone())?,
                cfg,
            )),
        }
    }

    pub fn to_f64(&self, cfg: FixedPointConfig) -> Vec<f64> {
        match &self.payload {
            TensorPayload::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorPayload::Ring(v) => v.iter().map(|&x| cfg.decode(x)).collect(),
        }
    }
}

pub fn write_tensor<W: Write>(w: &mut W, shape: &[usize], payload: &TensorPayload) -> Result<()> {
    let n: usize = shape.iter().product();
    if n != payload.len() {
        return Err(Error::Format(format!(
            "shape {shape:?} needs {n} elements, payload has {}",
            payload.len()
        )));
    }
    let rank = u16::try_from(shape.len())
        .map_err(|_| Error::Format(format!("rank {} too large", shape.len())))?;
    let mut buf = Vec::with_capacity(8 + 8 * shape.len() + n * payload.dtype().width());
    buf.extend_from_slice(&TENSOR_MAGIC);
    buf.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    buf.extend_from_slice(&rank.to_le_bytes());
    for &d in shape {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match payload {
        TensorPayload::F32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
        TensorPayload::Ring(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
    }
    w.write_all(&buf).map_err(Error::Transport)
}

fn read_header<R: Read>(r: &mut R) -> Result<Vec<usize>> {
    let mut head = [0u8; 8];
    read_exact(r, &mut head)?;
    if head[..4] != TENSOR_MAGIC {
        return Err(Error::Format(format!("bad tensor magic {:?}", &head[..4])));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != TENSOR_VERSION {
        return Err(Error::Format(format!("unsupported tensor version {version}")));
    }
    let rank = u16::from_le_bytes([head[6], head[7]]) as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut d = [0u8; 8];
        read_exact(r, &mut d)?;
        shape.push(
            usize::try_from(u64::from_le_bytes(d))
                .map_err(|_| Error::Format("dimension overflows usize".into()))?,
        );
    }
    Ok(shape)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Format(format!("truncated tensor data: {e}")))
}

fn decode_payload(bytes: &[u8], dtype: Dtype) -> TensorPayload {
    match dtype {
        Dtype::F32 => TensorPayload::F32(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::U64Ring => TensorPayload::Ring(
            bytes
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    }
}

pub fn read_tensor<R: Read>(r: &mut R, dtype: Dtype) -> Result<RawTensor> {
    let shape = read_header(r)?;
    let n: usize = shape.iter().product();
    let mut bytes = vec![0u8; n * dtype.width()];
    read_exact(r, &mut bytes)?;
    Ok(RawTensor {
        shape,
        payload: decode_payload(&bytes, dtype),
    })
}

/// Reads a single-tensor file. Without an explicit dtype the payload width is
/// inferred from the remaining byte count.
pub fn read_tensor_file(path: &Path, dtype: Option<Dtype>) -> Result<RawTensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = bytes.as_slice();
    let shape = read_header(&mut cur)?;
    let n: usize = shape.iter().product();
    let dtype = match dtype {
        Some(d) => d,
        None if cur.len() == 4 * n => Dtype::F32,
        None if cur.len() == 8 * n => Dtype::U64Ring,
        None => {
            return Err(Error::Format(format!(
                "{}: payload of {} bytes fits neither f32 nor u64ring for shape {shape:?}",
                path.display(),
                cur.len()
            )))
        }
    };
    if cur.len() != n * dtype.width() {
        return Err(Error::Format(format!(
            "{}: expected {} payload bytes, found {}",
            path.display(),
            n * dtype.width(),
            cur.len()
        )));
    }
    Ok(RawTensor {
        shape,
        payload: decode_payload(cur, dtype),
    })
}

pub fn write_tensor_file(path: &Path, shape: &[usize], payload: &TensorPayload) -> Result<()> {
    let mut buf = Vec::new();
    write_tensor(&mut buf, shape, payload)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
