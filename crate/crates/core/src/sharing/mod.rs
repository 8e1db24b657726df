//! Two-party additive (mod 2^64) and XOR secret sharing.
//!
//! Linear operations are local. Products go through Beaver triples from a
//! seeded dealer ([`dealer`]), conversions and sign extraction live in
//! [`convert`], and [`Session`] bundles a party's channel, triple stream and
//! local randomness.

pub mod beaver;
pub mod convert;
pub mod dealer;
mod session;

use rand::{Rng, RngCore};

pub use beaver::{and_beaver, matmul_beaver, mul_beaver, Product};
pub use dealer::{BeaverTriple, Flavor, TripleDealer, TripleKind};
pub use session::Session;

use crate::error::{Error, Result};
use crate::ring::{FixedPointConfig, FixedTensor, RingTensor};
use crate::runtime::Party;

/// One party's additive share of a fixed-point tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArithShare {
    party: Party,
    tensor: RingTensor,
    cfg: FixedPointConfig,
}

/// One party's XOR share; every bit of every word is shared independently.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinShare {
    party: Party,
    tensor: RingTensor,
}

pub fn share_arith<R: RngCore>(x: &FixedTensor, rng: &mut R) -> (ArithShare, ArithShare) {
    let mask = RingTensor::new(
        x.shape().to_vec(),
        (0..x.ring().len()).map(|_| rng.gen()).collect(),
    )
    .expect("shape taken from x");
    let other = x.ring().sub(&mask).expect("same shape");
    (
        ArithShare::new(Party::Zero, mask, x.config()),
        ArithShare::new(Party::One, other, x.config()),
    )
}

pub fn reconstruct_arith(s0: &ArithShare, s1: &ArithShare) -> Result<FixedTensor> {
    if s0.party == s1.party {
        return Err(Error::Protocol("reconstruction needs one share from each party".into()));
    }
    if s0.cfg != s1.cfg {
        return Err(Error::ConfigMismatch(s0.cfg.frac_bits(), s1.cfg.frac_bits()));
    }
    Ok(FixedTensor::from_ring(s0.tensor.add(&s1.tensor)?, s0.cfg))
}

pub fn share_bin<R: RngCore>(x: &RingTensor, rng: &mut R) -> (BinShare, BinShare) {
    let mask = RingTensor::new(x.shape().to_vec(), (0..x.len()).map(|_| rng.gen()).collect())
        .expect("shape taken from x");
    let other = x.xor(&mask).expect("same shape");
    (
        BinShare::new(Party::Zero, mask),
        BinShare::new(Party::One, other),
    )
}

pub fn reconstruct_bin(s0: &BinShare, s1: &BinShare) -> Result<RingTensor> {
    if s0.party == s1.party {
        return Err(Error::Protocol("reconstruction needs one share from each party".into()));
    }
    s0.tensor.xor(&s1.tensor)
}

/// `sum_i c_i * [x_i] + public`, with ring coefficients `c_i`. The public
/// term is added by party 0 only. No communication.
pub fn linear_combine(terms: &[(u64, &ArithShare)], public: Option<&RingTensor>) -> Result<ArithShare> {
    let (_, first) = terms
        .first()
        .ok_or_else(|| Error::InvalidConfig("linear_combine needs at least one term".into()))?;
    let mut acc = RingTensor::zeros(first.shape());
    for (c, s) in terms {
        first.check_compatible(s)?;
        acc = acc.add(&s.tensor.mul_scalar(*c))?;
    }
    if let (Some(p), Party::Zero) = (public, first.party) {
        acc = acc.add(p)?;
    }
    Ok(first.lift(acc))
}

impl ArithShare {
    pub fn new(party: Party, tensor: RingTensor, cfg: FixedPointConfig) -> Self {
        ArithShare { party, tensor, cfg }
    }

    /// Share of a public value: party 0 holds it, party 1 holds zero.
    pub fn public(party: Party, value: &RingTensor, cfg: FixedPointConfig) -> Self {
        let tensor = match party {
            Party::Zero => value.clone(),
            Party::One => RingTensor::zeros(value.shape()),
        };
        ArithShare { party, tensor, cfg }
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn shape(&self) -> &[usize] {
        self.tensor.shape()
    }

    pub fn ring(&self) -> &RingTensor {
        &self.tensor
    }

    pub fn config(&self) -> FixedPointConfig {
        self.cfg
    }

    pub(crate) fn lift(&self, tensor: RingTensor) -> Self {
        ArithShare {
            party: self.party,
            tensor,
            cfg: self.cfg,
        }
    }

    fn check_compatible(&self, other: &ArithShare) -> Result<()> {
        if self.party != other.party {
            return Err(Error::Protocol("mixing shares of different parties".into()));
        }
        if self.cfg != other.cfg {
            return Err(Error::ConfigMismatch(self.cfg.frac_bits(), other.cfg.frac_bits()));
        }
        Ok(())
    }

    pub fn add(&self, other: &ArithShare) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(self.lift(self.tensor.add(&other.tensor)?))
    }

    pub fn sub(&self, other: &ArithShare) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(self.lift(self.tensor.sub(&other.tensor)?))
    }

    pub fn neg(&self) -> Self {
        self.lift(self.tensor.neg())
    }

    /// Multiplies by a raw ring constant (an integer, not a fixed-point value).
    pub fn mul_int(&self, c: u64) -> Self {
        self.lift(self.tensor.mul_scalar(c))
    }

    /// Multiplies by a public real and rescales, at the cost of one local truncation.
    pub fn mul_public(&self, c: f64) -> Result<Self> {
        let enc = self.cfg.encode(c)?;
        Ok(self.lift(self.tensor.mul_scalar(enc)).truncate(self.cfg.frac_bits()))
    }

    /// Adds a public tensor of the same shape (party 0 only).
    pub fn add_public(&self, value: &RingTensor) -> Result<Self> {
        match self.party {
            Party::Zero => Ok(self.lift(self.tensor.add(value)?)),
            Party::One => {
                if value.shape() != self.shape() {
                    return Err(Error::shape("add_public", self.shape(), value.shape()));
                }
                Ok(self.clone())
            }
        }
    }

    /// Adds a public ring constant to every element (party 0 only).
    pub fn add_public_scalar(&self, c: u64) -> Self {
        match self.party {
            Party::Zero => self.lift(self.tensor.add_scalar(c)),
            Party::One => self.clone(),
        }
    }

    /// Local probabilistic truncation: each party shifts its own share.
    /// The reconstruction is off by at most one unit, except with probability
    /// about `|x| / 2^64` where the shares wrap.
    pub fn truncate(&self, bits: u32) -> Self {
        self.lift(self.tensor.ashr(bits))
    }

    pub fn map_ring(&self, f: impl FnOnce(&RingTensor) -> Result<RingTensor>) -> Result<Self> {
        Ok(self.lift(f(&self.tensor)?))
    }
}

impl BinShare {
    pub fn new(party: Party, tensor: RingTensor) -> Self {
        BinShare { party, tensor }
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn shape(&self) -> &[usize] {
        self.tensor.shape()
    }

    pub fn ring(&self) -> &RingTensor {
        &self.tensor
    }

    pub fn xor(&self, other: &BinShare) -> Result<Self> {
        if self.party != other.party {
            return Err(Error::Protocol("mixing shares of different parties".into()));
        }
        Ok(BinShare::new(self.party, self.tensor.xor(&other.tensor)?))
    }

    /// XOR with a public word (party 0 only).
    pub fn xor_public(&self, c: u64) -> Self {
        match self.party {
            Party::Zero => BinShare::new(self.party, self.tensor.map(|v| v ^ c)),
            Party::One => self.clone(),
        }
    }

    pub fn shl(&self, bits: u32) -> Self {
        BinShare::new(self.party, self.tensor.map(|v| v << bits))
    }

    pub fn shr(&self, bits: u32) -> Self {
        BinShare::new(self.party, self.tensor.map(|v| v >> bits))
    }

    /// AND with a public mask; local because XOR distributes over it.
    pub fn and_public(&self, mask: u64) -> Self {
        BinShare::new(self.party, self.tensor.map(|v| v & mask))
    }
}
