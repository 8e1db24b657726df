//! Fixed-point encoding and exact arithmetic in the ring Z_{2^64}.
//!
//! Ring elements are stored as `u64` and every operation wraps. Signed values
//! use the two's-complement interpretation, so a fixed-point real `v` at
//! `f` fractional bits is the ring element `round(v * 2^f) mod 2^64`.

pub mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bit width of the ring; the modulus is `2^RING_BITS`.
pub const RING_BITS: u32 = 64;

/// Encoded magnitudes must stay below `2^HEADROOM_BITS`.
pub const HEADROOM_BITS: u32 = 62;

pub const DEFAULT_FRAC_BITS: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawFixedPoint", into = "RawFixedPoint")]
pub struct FixedPointConfig {
    frac_bits: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFixedPoint {
    frac_bits: u32,
}

impl TryFrom<RawFixedPoint> for FixedPointConfig {
    type Error = Error;

    fn try_from(raw: RawFixedPoint) -> Result<Self> {
        FixedPointConfig::new(raw.frac_bits)
    }
}

impl From<FixedPointConfig> for RawFixedPoint {
    fn from(cfg: FixedPointConfig) -> Self {
        RawFixedPoint {
            frac_bits: cfg.frac_bits,
        }
    }
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl FixedPointConfig {
    pub const DEFAULT: FixedPointConfig = FixedPointConfig {
        frac_bits: DEFAULT_FRAC_BITS,
    };

    pub fn new(frac_bits: u32) -> Result<Self> {
        if !(1..=32).contains(&frac_bits) {
            return Err(Error::InvalidConfig(format!(
                "frac_bits must be in 1..=32, got {frac_bits}"
            )));
        }
        Ok(FixedPointConfig { frac_bits })
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn ring_bits(&self) -> u32 {
        RING_BITS
    }

    /// `2^f` as a float.
    pub fn scale(&self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    /// One unit in the last place, `2^-f`.
    pub fn ulp(&self) -> f64 {
        1.0 / self.scale()
    }

    /// Encodes `value` as `round(value * 2^f) mod 2^64`, rounding half away from zero.
    pub fn encode(&self, value: f64) -> Result<u64> {
        let scaled = (value * self.scale()).round();
        if !scaled.is_finite() || scaled.abs() >= (1u64 << HEADROOM_BITS) as f64 {
            return Err(Error::Overflow {
                value,
                frac_bits: self.frac_bits,
            });
        }
        Ok(scaled as i64 as u64)
    }

    pub fn decode(&self, v: u64) -> f64 {
        v as i64 as f64 / self.scale()
    }
}

/// Arithmetic right shift of a ring element viewed as a signed integer.
#[inline]
pub fn ashr(v: u64, bits: u32) -> u64 {
    ((v as i64) >> bits) as u64
}

/// Dense row-major tensor of ring elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingTensor {
    shape: Vec<usize>,
    data: Vec<u64>,
}

impl RingTensor {
    pub fn new(shape: Vec<usize>, data: Vec<u64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Format(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(RingTensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0)
    }

    pub fn filled(shape: &[usize], v: u64) -> Self {
        let n = shape.iter().product();
        RingTensor {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn map(&self, f: impl Fn(u64) -> u64) -> Self {
        RingTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(
        &self,
        other: &RingTensor,
        op: &'static str,
        f: impl Fn(u64, u64) -> u64,
    ) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(RingTensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &RingTensor) -> Result<Self> {
        self.zip_with(other, "add", u64::wrapping_add)
    }

    pub fn sub(&self, other: &RingTensor) -> Result<Self> {
        self.zip_with(other, "sub", u64::wrapping_sub)
    }

    pub fn mul(&self, other: &RingTensor) -> Result<Self> {
        self.zip_with(other, "mul", u64::wrapping_mul)
    }

    pub fn xor(&self, other: &RingTensor) -> Result<Self> {
        self.zip_with(other, "xor", |a, b| a ^ b)
    }

    pub fn and(&self, other: &RingTensor) -> Result<Self> {
        self.zip_with(other, "and", |a, b| a & b)
    }

    pub fn neg(&self) -> Self {
        self.map(u64::wrapping_neg)
    }

    pub fn mul_scalar(&self, c: u64) -> Self {
        self.map(|v| v.wrapping_mul(c))
    }

    pub fn add_scalar(&self, c: u64) -> Self {
        self.map(|v| v.wrapping_add(c))
    }

    pub fn ashr(&self, bits: u32) -> Self {
        self.map(|v| ashr(v, bits))
    }

    /// Splits a shape into (batch, rows, cols) for matrix products.
    fn matrix_dims(shape: &[usize]) -> Option<(usize, usize, usize)> {
        match *shape {
            [m, n] => Some((1, m, n)),
            [b, m, n] => Some((b, m, n)),
            _ => None,
        }
    }

    /// Ring matrix product, batched over an optional leading dimension.
    pub fn matmul(&self, other: &RingTensor) -> Result<Self> {
        let err = || Error::shape("matmul", &self.shape, &other.shape);
        let (ba, m, k) = Self::matrix_dims(&self.shape).ok_or_else(err)?;
        let (bb, k2, n) = Self::matrix_dims(&other.shape).ok_or_else(err)?;
        if k != k2 || ba != bb || self.shape.len() != other.shape.len() {
            return Err(err());
        }
        let mut out = vec![0u64; ba * m * n];
        for b in 0..ba {
            let lhs = &self.data[b * m * k..(b + 1) * m * k];
            let rhs = &other.data[b * k * n..(b + 1) * k * n];
            let dst = &mut out[b * m * n..(b + 1) * m * n];
            for i in 0..m {
                let row = &mut dst[i * n..(i + 1) * n];
                for p in 0..k {
                    let a = lhs[i * k + p];
                    if a == 0 {
                        continue;
                    }
                    let rrow = &rhs[p * n..(p + 1) * n];
                    for (d, &r) in row.iter_mut().zip(rrow) {
                        *d = d.wrapping_add(a.wrapping_mul(r));
                    }
                }
            }
        }
        let mut shape = self.shape.clone();
        let last = shape.len() - 1;
        shape[last] = n;
        Ok(RingTensor { shape, data: out })
    }

    /// Swaps the two trailing axes.
    pub fn transpose_last2(&self) -> Result<Self> {
        let (b, m, n) = Self::matrix_dims(&self.shape)
            .ok_or_else(|| Error::shape("transpose", &self.shape, &[]))?;
        let mut out = vec![0u64; self.data.len()];
        for bi in 0..b {
            let off = bi * m * n;
            for i in 0..m {
                for j in 0..n {
                    out[off + j * m + i] = self.data[off + i * n + j];
                }
            }
        }
        let mut shape = self.shape.clone();
        let r = shape.len();
        shape.swap(r - 1, r - 2);
        Ok(RingTensor { shape, data: out })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(RingTensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// `[N, r]` to `[h, N, r/h]`: column block `j` becomes head `j`.
    pub fn split_heads(&self, heads: usize) -> Result<Self> {
        let [n, r] = *self.shape.as_slice() else {
            return Err(Error::shape("split_heads", &self.shape, &[heads]));
        };
        if heads == 0 || r % heads != 0 {
            return Err(Error::shape("split_heads", &self.shape, &[heads]));
        }
        let dh = r / heads;
        let mut out = Vec::with_capacity(self.data.len());
        for h in 0..heads {
            for i in 0..n {
                out.extend_from_slice(&self.data[i * r + h * dh..i * r + (h + 1) * dh]);
            }
        }
        Ok(RingTensor {
            shape: vec![heads, n, dh],
            data: out,
        })
    }

    /// Inverse of [`split_heads`](Self::split_heads).
    pub fn merge_heads(&self) -> Result<Self> {
        let [heads, n, dh] = *self.shape.as_slice() else {
            return Err(Error::shape("merge_heads", &self.shape, &[]));
        };
        let r = heads * dh;
        let mut out = vec![0u64; self.data.len()];
        for h in 0..heads {
            for i in 0..n {
                let src = &self.data[(h * n + i) * dh..(h * n + i + 1) * dh];
                out[i * r + h * dh..i * r + (h + 1) * dh].copy_from_slice(src);
            }
        }
        Ok(RingTensor {
            shape: vec![n, r],
            data: out,
        })
    }

    /// Row `i` of a matrix, as a `[1, cols]` matrix.
    pub fn row(&self, i: usize) -> Result<Self> {
        let [rows, cols] = *self.shape.as_slice() else {
            return Err(Error::shape("row", &self.shape, &[i]));
        };
        if i >= rows {
            return Err(Error::shape("row", &self.shape, &[i]));
        }
        Ok(RingTensor {
            shape: vec![1, cols],
            data: self.data[i * cols..(i + 1) * cols].to_vec(),
        })
    }

    /// Sums over the trailing axis, keeping it with length 1.
    pub fn sum_last(&self) -> Self {
        let d = *self.shape.last().unwrap_or(&1);
        let mut shape = self.shape.clone();
        if let Some(last) = shape.last_mut() {
            *last = 1;
        }
        let data = if d == 0 {
            vec![0; self.data.len()]
        } else {
            self.data
                .chunks(d)
                .map(|c| c.iter().fold(0u64, |acc, &v| acc.wrapping_add(v)))
                .collect()
        };
        RingTensor { shape, data }
    }

    /// `[.., 1]` to `[.., d]` by repeating each entry along the trailing axis.
    pub fn broadcast_last(&self, d: usize) -> Result<Self> {
        if self.shape.last() != Some(&1) {
            return Err(Error::shape("broadcast_last", &self.shape, &[d]));
        }
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = d;
        let data = self
            .data
            .iter()
            .flat_map(|&v| std::iter::repeat(v).take(d))
            .collect();
        Ok(RingTensor { shape, data })
    }

    /// `[d]` or `[1, d]` to `[n, d]` by repeating the row.
    pub fn broadcast_rows(&self, n: usize) -> Result<Self> {
        let d = match *self.shape.as_slice() {
            [d] | [1, d] => d,
            _ => return Err(Error::shape("broadcast_rows", &self.shape, &[n])),
        };
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            data.extend_from_slice(&self.data);
        }
        Ok(RingTensor {
            shape: vec![n, d],
            data,
        })
    }

    /// `[m, n]` to `[b, m, n]` by stacking copies.
    pub fn repeat_batch(&self, b: usize) -> Result<Self> {
        if self.shape.len() != 2 {
            return Err(Error::shape("repeat_batch", &self.shape, &[b]));
        }
        let mut data = Vec::with_capacity(b * self.data.len());
        for _ in 0..b {
            data.extend_from_slice(&self.data);
        }
        Ok(RingTensor {
            shape: vec![b, self.shape[0], self.shape[1]],
            data,
        })
    }
}

/// Plaintext fixed-point tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedTensor {
    tensor: RingTensor,
    cfg: FixedPointConfig,
}

impl FixedTensor {
    pub fn from_ring(tensor: RingTensor, cfg: FixedPointConfig) -> Self {
        FixedTensor { tensor, cfg }
    }

    pub fn from_f64(shape: &[usize], values: &[f64], cfg: FixedPointConfig) -> Result<Self> {
        let data = values
            .iter()
            .map(|&v| cfg.encode(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(FixedTensor {
            tensor: RingTensor::new(shape.to_vec(), data)?,
            cfg,
        })
    }

    pub fn zeros(shape: &[usize], cfg: FixedPointConfig) -> Self {
        FixedTensor {
            tensor: RingTensor::zeros(shape),
            cfg,
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.tensor.data().iter().map(|&v| self.cfg.decode(v)).collect()
    }

    pub fn shape(&self) -> &[usize] {
        self.tensor.shape()
    }

    pub fn ring(&self) -> &RingTensor {
        &self.tensor
    }

    pub fn into_ring(self) -> RingTensor {
        self.tensor
    }

    pub fn config(&self) -> FixedPointConfig {
        self.cfg
    }

    fn check_cfg(&self, other: &FixedTensor) -> Result<()> {
        if self.cfg != other.cfg {
            return Err(Error::ConfigMismatch(self.cfg.frac_bits, other.cfg.frac_bits));
        }
        Ok(())
    }

    fn lift(&self, tensor: RingTensor) -> Self {
        FixedTensor {
            tensor,
            cfg: self.cfg,
        }
    }

    pub fn add(&self, other: &FixedTensor) -> Result<Self> {
        self.check_cfg(other)?;
        Ok(self.lift(self.tensor.add(&other.tensor)?))
    }

    pub fn sub(&self, other: &FixedTensor) -> Result<Self> {
        self.check_cfg(other)?;
        Ok(self.lift(self.tensor.sub(&other.tensor)?))
    }

    /// Elementwise product followed by a signed shift by `f`. `other` may be a
    /// single element, which is broadcast.
    pub fn mul_fixed_plain(&self, other: &FixedTensor) -> Result<Self> {
        self.check_cfg(other)?;
        let f = self.cfg.frac_bits;
        let prod = if other.tensor.len() == 1 && self.tensor.shape() != other.tensor.shape() {
            self.tensor.mul_scalar(other.tensor.data()[0])
        } else {
            self.tensor.mul(&other.tensor)?
        };
        Ok(self.lift(prod.ashr(f)))
    }

    /// Ring matrix product with one truncation per accumulated entry.
    pub fn matmul_plain(&self, other: &FixedTensor) -> Result<Self> {
        self.check_cfg(other)?;
        Ok(self.lift(self.tensor.matmul(&other.tensor)?.ashr(self.cfg.frac_bits)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> FixedPointConfig {
        FixedPointConfig::default()
    }

    #[test]
    fn encode_examples() {
        assert_eq!(cfg().encode(1.5).unwrap(), 98304);
        assert_eq!(cfg().encode(0.0).unwrap(), 0);
        assert_eq!(cfg().encode(-0.25).unwrap(), 0u64.wrapping_sub(16384));
    }

    #[test]
    fn decode_examples() {
        assert_eq!(cfg().decode(98304), 1.5);
        assert_eq!(cfg().decode(0u64.wrapping_sub(16384)), -0.25);
        assert_eq!(cfg().decode(1), 2f64.powi(-16));
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        let c = cfg();
        let half_ulp = c.ulp() / 2.0;
        assert_eq!(c.encode(half_ulp).unwrap(), 1);
        assert_eq!(c.encode(-half_ulp).unwrap(), u64::MAX);
    }

    #[test]
    fn headroom_guard() {
        let c = cfg();
        assert!(c.encode(2f64.powi(46) - 1.0).is_ok());
        assert!(matches!(c.encode(2f64.powi(46)), Err(Error::Overflow { .. })));
        assert!(c.encode(f64::NAN).is_err());
    }

    #[test]
    fn frac_bits_bounds() {
        assert!(FixedPointConfig::new(0).is_err());
        assert!(FixedPointConfig::new(33).is_err());
        assert!(FixedPointConfig::new(32).is_ok());
    }

    #[test]
    fn mul_fixed_examples() {
        let c = cfg();
        let t = |v: f64| FixedTensor::from_f64(&[1], &[v], c).unwrap();
        assert_eq!(t(1.5).mul_fixed_plain(&t(2.0)).unwrap().to_f64(), [3.0]);
        assert_eq!(t(0.5).mul_fixed_plain(&t(0.5)).unwrap().to_f64(), [0.25]);
        assert_eq!(t(-1.0).mul_fixed_plain(&t(1.0)).unwrap().to_f64(), [-1.0]);
    }

    #[test]
    fn mul_fixed_shape_mismatch() {
        let c = cfg();
        let a = FixedTensor::from_f64(&[2], &[1.0, 2.0], c).unwrap();
        let b = FixedTensor::from_f64(&[3], &[1.0, 2.0, 3.0], c).unwrap();
        assert!(matches!(a.mul_fixed_plain(&b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn matmul_examples() {
        let c = cfg();
        let id = FixedTensor::from_f64(&[2, 2], &[1.0, 0.0, 0.0, 1.0], c).unwrap();
        let b = FixedTensor::from_f64(&[2, 2], &[0.5, -3.25, 7.0, 1.0 / 3.0], c).unwrap();
        assert_eq!(id.matmul_plain(&b).unwrap(), b);

        let row = FixedTensor::from_f64(&[1, 2], &[1.0, 2.0], c).unwrap();
        let col = FixedTensor::from_f64(&[2, 1], &[3.0, 4.0], c).unwrap();
        assert_eq!(row.matmul_plain(&col).unwrap().to_f64(), [11.0]);
        assert!(col.matmul_plain(&col).is_err());
    }

    #[test]
    fn matmul_matches_f64_reference() {
        use rand::{Rng, SeedableRng};
        let c = cfg();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let k = 4;
        let a: Vec<f64> = (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let fa = FixedTensor::from_f64(&[4, 4], &a, c).unwrap();
        let fb = FixedTensor::from_f64(&[4, 4], &b, c).unwrap();
        // reference uses the encoded (rounded) operands so only truncation error remains
        let (qa, qb) = (fa.to_f64(), fb.to_f64());
        let got = fa.matmul_plain(&fb).unwrap().to_f64();
        for i in 0..4 {
            for j in 0..4 {
                let want: f64 = (0..k).map(|p| qa[i * k + p] * qb[p * 4 + j]).sum();
                assert!((got[i * 4 + j] - want).abs() <= k as f64 * c.ulp());
            }
        }
    }

    #[test]
    fn head_split_roundtrip() {
        let t = RingTensor::new(vec![2, 4], (0..8).collect()).unwrap();
        let s = t.split_heads(2).unwrap();
        assert_eq!(s.shape(), &[2, 2, 2]);
        assert_eq!(s.data(), &[0, 1, 4, 5, 2, 3, 6, 7]);
        assert_eq!(s.merge_heads().unwrap(), t);
        assert!(t.split_heads(3).is_err());
    }

    #[test]
    fn transpose_and_broadcast() {
        let t = RingTensor::new(vec![2, 3], (0..6).collect()).unwrap();
        let tt = t.transpose_last2().unwrap();
        assert_eq!(tt.shape(), &[3, 2]);
        assert_eq!(tt.data(), &[0, 3, 1, 4, 2, 5]);
        let s = t.sum_last();
        assert_eq!(s.data(), &[3, 12]);
        assert_eq!(s.broadcast_last(2).unwrap().data(), &[3, 3, 12, 12]);
        let r = t.row(1).unwrap();
        assert_eq!(r.broadcast_rows(2).unwrap().data(), &[3, 4, 5, 3, 4, 5]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn decode_encode_is_nearest_grid_point(v in -1.0e6f64..1.0e6) {
                let c = FixedPointConfig::default();
                let back = c.decode(c.encode(v).unwrap());
                prop_assert!((back - v).abs() <= c.ulp() / 2.0 + 1e-12);
            }

            #[test]
            // f64 carries 53 significant bits, so the ring roundtrip is exact below 2^53
            fn encode_decode_is_identity_on_ring(v in -(1i64 << 53)..(1i64 << 53)) {
                let c = FixedPointConfig::default();
                prop_assert_eq!(c.encode(c.decode(v as u64)).unwrap(), v as u64);
            }

            #[test]
            fn encoding_is_additive(a in -1.0e5f64..1.0e5, b in -1.0e5f64..1.0e5) {
                let c = FixedPointConfig::default();
                // exact when both operands already sit on the grid
                let (a, b) = (c.decode(c.encode(a).unwrap()), c.decode(c.encode(b).unwrap()));
                prop_assert_eq!(
                    c.encode(a).unwrap().wrapping_add(c.encode(b).unwrap()),
                    c.encode(a + b).unwrap()
                );
            }

            #[test]
            fn mul_error_within_one_ulp(a in -100.0f64..100.0, b in -100.0f64..100.0) {
                let c = FixedPointConfig::default();
                let fa = FixedTensor::from_f64(&[1], &[a], c).unwrap();
                let fb = FixedTensor::from_f64(&[1], &[b], c).unwrap();
                let exact = fa.to_f64()[0] * fb.to_f64()[0];
                let got = fa.mul_fixed_plain(&fb).unwrap().to_f64()[0];
                prop_assert!((got - exact).abs() <= c.ulp());
            }
        }
    }
}
