//! One forward pass, three executions.
//!
//! The adapter wiring in [`super::ops`] is written against [`Backend`]:
//! [`RealPlain`] runs it in double precision, [`FixedPlain`] in plaintext
//! fixed point with the same truncation points as the protocol, and
//! [`Session`] runs it on secret shares.

use super::ops::relu_private;
use crate::error::{Error, Result};
use crate::ring::{FixedPointConfig, FixedTensor, RingTensor};
use crate::sharing::{ArithShare, Product, Session};

/// Data-movement operations shared by every tensor representation.
pub trait Layout: Clone {
    fn shape(&self) -> &[usize];

    /// Applies a pure rearrangement (transpose, head split, broadcast, ...).
    fn relayout(&self, f: impl Fn(&RingTensor) -> Result<RingTensor>) -> Result<Self>;

    /// Sum over the trailing axis, kept with length 1.
    fn sum_last(&self) -> Self;
}

/// Dense row-major `f64` tensor for the double-precision reference.
#[derive(Clone, Debug, PartialEq)]
pub struct RealTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl RealTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Format(format!("shape {shape:?} needs {n} elements, got {}", data.len())));
        }
        Ok(RealTensor { shape, data })
    }

    pub fn from_fixed(t: &FixedTensor) -> Self {
        RealTensor {
            shape: t.shape().to_vec(),
            data: t.to_f64(),
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        RealTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip(&self, other: &RealTensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(RealTensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &RealTensor) -> Result<Self> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &RealTensor) -> Result<Self> {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &RealTensor) -> Result<Self> {
        self.zip(other, "mul", |a, b| a * b)
    }

    /// Matrix product with the same shape rules as [`RingTensor::matmul`].
    pub fn matmul(&self, other: &RealTensor) -> Result<Self> {
        let err = || Error::shape("matmul", &self.shape, &other.shape);
        let dims = |s: &[usize]| match *s {
            [m, n] => Some((1, m, n)),
            [b, m, n] => Some((b, m, n)),
            _ => None,
        };
        let (ba, m, k) = dims(&self.shape).ok_or_else(err)?;
        let (bb, k2, n) = dims(&other.shape).ok_or_else(err)?;
        if k != k2 || ba != bb || self.shape.len() != other.shape.len() {
            return Err(err());
        }
        let mut out = vec![0.0; ba * m * n];
        for b in 0..ba {
            for i in 0..m {
                for p in 0..k {
                    let a = self.data[b * m * k + i * k + p];
                    let rrow = &other.data[b * k * n + p * n..b * k * n + (p + 1) * n];
                    let dst = &mut out[b * m * n + i * n..b * m * n + (i + 1) * n];
                    for (d, r) in dst.iter_mut().zip(rrow) {
                        *d += a * r;
                    }
                }
            }
        }
        let mut shape = self.shape.clone();
        *shape.last_mut().expect("rank >= 2") = n;
        Ok(RealTensor { shape, data: out })
    }
}

impl Layout for RealTensor {
    fn shape(&self) -> &[usize] {
        &self.shape
    }

    fn relayout(&self, f: impl Fn(&RingTensor) -> Result<RingTensor>) -> Result<Self> {
        // run the rearrangement on element indices, then gather
        let idx = RingTensor::new(self.shape.clone(), (0..self.data.len() as u64).collect())?;
        let moved = f(&idx)?;
        Ok(RealTensor {
            shape: moved.shape().to_vec(),
            data: moved.data().iter().map(|&i| self.data[i as usize]).collect(),
        })
    }

    fn sum_last(&self) -> Self {
        let d = *self.shape.last().unwrap_or(&1);
        let mut shape = self.shape.clone();
        if let Some(l) = shape.last_mut() {
            *l = 1;
        }
        RealTensor {
            shape,
            data: self.data.chunks(d.max(1)).map(|c| c.iter().sum()).collect(),
        }
    }
}

impl Layout for FixedTensor {
    fn shape(&self) -> &[usize] {
        FixedTensor::shape(self)
    }

    fn relayout(&self, f: impl Fn(&RingTensor) -> Result<RingTensor>) -> Result<Self> {
        Ok(FixedTensor::from_ring(f(self.ring())?, self.config()))
    }

    fn sum_last(&self) -> Self {
        FixedTensor::from_ring(self.ring().sum_last(), self.config())
    }
}

impl Layout for ArithShare {
    fn shape(&self) -> &[usize] {
        ArithShare::shape(self)
    }

    fn relayout(&self, f: impl Fn(&RingTensor) -> Result<RingTensor>) -> Result<Self> {
        self.map_ring(f)
    }

    fn sum_last(&self) -> Self {
        self.lift(self.ring().sum_last())
    }
}

/// Arithmetic needed by the adapter forward pass.
pub trait Backend {
    type T: Layout;

    fn add(&mut self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn sub(&mut self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    /// Multiplication by a public real.
    fn scale(&mut self, a: &Self::T, c: f64) -> Result<Self::T>;
    /// Addition of a public real to every element.
    fn offset(&mut self, a: &Self::T, c: f64) -> Result<Self::T>;
    /// Products at working precision, all in one round for the private backend.
    fn products(&mut self, jobs: &[(Product, &Self::T, &Self::T)], op: &str) -> Result<Vec<Self::T>>;
    fn relu(&mut self, x: &Self::T) -> Result<Self::T>;

    /// Labels the communication of `f` (no-op for plaintext backends).
    fn scope<R>(&mut self, _name: &str, f: impl FnOnce(&mut Self) -> Result<R>) -> Result<R>
    where
        Self: Sized,
    {
        f(self)
    }
}

/// Double-precision reference.
#[derive(Clone, Copy, Debug, Default)]
pub struct RealPlain;

impl Backend for RealPlain {
    type T = RealTensor;

    fn add(&mut self, a: &RealTensor, b: &RealTensor) -> Result<RealTensor> {
        a.add(b)
    }

    fn sub(&mut self, a: &RealTensor, b: &RealTensor) -> Result<RealTensor> {
        a.sub(b)
    }

    fn scale(&mut self, a: &RealTensor, c: f64) -> Result<RealTensor> {
        Ok(a.map(|v| v * c))
    }

    fn offset(&mut self, a: &RealTensor, c: f64) -> Result<RealTensor> {
        Ok(a.map(|v| v + c))
    }

    fn products(&mut self, jobs: &[(Product, &RealTensor, &RealTensor)], _op: &str) -> Result<Vec<RealTensor>> {
        jobs.iter()
            .map(|(p, a, b)| match p {
                Product::Elementwise => a.mul(b),
                Product::Matmul => a.matmul(b),
            })
            .collect()
    }

    fn relu(&mut self, x: &RealTensor) -> Result<RealTensor> {
        Ok(x.map(|v| v.max(0.0)))
    }
}

/// Plaintext fixed point, truncating exactly where the protocol does.
#[derive(Clone, Copy, Debug, Default)]
pub struct FixedPlain {
    pub cfg: FixedPointConfig,
}

impl Backend for FixedPlain {
    type T = FixedTensor;

    fn add(&mut self, a: &FixedTensor, b: &FixedTensor) -> Result<FixedTensor> {
        a.add(b)
    }

    fn sub(&mut self, a: &FixedTensor, b: &FixedTensor) -> Result<FixedTensor> {
        a.sub(b)
    }

    fn scale(&mut self, a: &FixedTensor, c: f64) -> Result<FixedTensor> {
        let enc = self.cfg.encode(c)?;
        Ok(FixedTensor::from_ring(a.ring().mul_scalar(enc).ashr(self.cfg.frac_bits()), a.config()))
    }

    fn offset(&mut self, a: &FixedTensor, c: f64) -> Result<FixedTensor> {
        let enc = self.cfg.encode(c)?;
        Ok(FixedTensor::from_ring(a.ring().add_scalar(enc), a.config()))
    }

    fn products(&mut self, jobs: &[(Product, &FixedTensor, &FixedTensor)], _op: &str) -> Result<Vec<FixedTensor>> {
        jobs.iter()
            .map(|(p, a, b)| match p {
                Product::Elementwise => a.mul_fixed_plain(b),
                Product::Matmul => a.matmul_plain(b),
            })
            .collect()
    }

    fn relu(&mut self, x: &FixedTensor) -> Result<FixedTensor> {
        Ok(FixedTensor::from_ring(x.ring().map(|v| if (v as i64) < 0 { 0 } else { v }), x.config()))
    }
}

impl Backend for Session<'_> {
    type T = ArithShare;

    fn add(&mut self, a: &ArithShare, b: &ArithShare) -> Result<ArithShare> {
        a.add(b)
    }

    fn sub(&mut self, a: &ArithShare, b: &ArithShare) -> Result<ArithShare> {
        a.sub(b)
    }

    fn scale(&mut self, a: &ArithShare, c: f64) -> Result<ArithShare> {
        a.mul_public(c)
    }

    fn offset(&mut self, a: &ArithShare, c: f64) -> Result<ArithShare> {
        Ok(a.add_public_scalar(self.config().encode(c)?))
    }

    fn products(&mut self, jobs: &[(Product, &ArithShare, &ArithShare)], op: &str) -> Result<Vec<ArithShare>> {
        Session::products(self, jobs, op)
    }

    fn relu(&mut self, x: &ArithShare) -> Result<ArithShare> {
        relu_private(x, self)
    }

    fn scope<R>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<R>) -> Result<R> {
        self.scoped(name, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_relayout_matches_ring() {
        let t = RealTensor::new(vec![2, 4], (0..8).map(f64::from).collect()).unwrap();
        let heads = t.relayout(|r| r.split_heads(2)).unwrap();
        assert_eq!(heads.shape(), &[2, 2, 2]);
        assert_eq!(heads.data(), &[0.0, 1.0, 4.0, 5.0, 2.0, 3.0, 6.0, 7.0]);
        assert_eq!(heads.relayout(|r| r.merge_heads()).unwrap(), t);
        assert_eq!(t.sum_last().data(), &[6.0, 22.0]);
    }

    #[test]
    fn real_matmul() {
        let a = RealTensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let b = RealTensor::new(vec![2, 1], vec![3.0, 4.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[11.0]);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn fixed_relu_is_exact() {
        let cfg = FixedPointConfig::default();
        let x = FixedTensor::from_f64(&[3], &[-2.0, 3.0, 0.0], cfg).unwrap();
        assert_eq!(FixedPlain { cfg }.relu(&x).unwrap().to_f64(), [0.0, 3.0, 0.0]);
    }
}
