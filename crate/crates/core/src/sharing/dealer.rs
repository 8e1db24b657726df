//! Trusted dealer for Beaver triples.
//!
//! The dealer is a seeded stream: two dealers built from the same seed emit
//! identical triples in identical order, which lets each party run its own
//! copy and keep only its share. Triples belong to the offline phase and are
//! never metered.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::ring::RingTensor;
use crate::runtime::Party;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flavor {
    /// `c = a * b mod 2^64`, additive shares.
    Arithmetic,
    /// `c = a AND b` bitwise, XOR shares.
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TripleKind {
    Elementwise,
    Matmul,
    Binary,
}

/// One party's share of a triple `(a, b, c)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BeaverTriple {
    pub party: Party,
    pub kind: TripleKind,
    pub a: RingTensor,
    pub b: RingTensor,
    pub c: RingTensor,
}

impl BeaverTriple {
    /// Builds a triple share from raw parts, e.g. for hand-checked examples.
    pub fn from_parts(party: Party, kind: TripleKind, a: RingTensor, b: RingTensor, c: RingTensor) -> Self {
        BeaverTriple { party, kind, a, b, c }
    }
}

pub struct TripleDealer {
    rng: ChaCha20Rng,
    issued: BTreeMap<String, u64>,
}

impl TripleDealer {
    pub fn new(seed: u64) -> Self {
        TripleDealer {
            rng: ChaCha20Rng::seed_from_u64(seed),
            issued: BTreeMap::new(),
        }
    }

    /// Number of triples handed out so far, keyed by kind and shape.
    pub fn issued(&self) -> &BTreeMap<String, u64> {
        &self.issued
    }

    fn count(&mut self, key: String) {
        *self.issued.entry(key).or_default() += 1;
    }

    fn random(&mut self, shape: &[usize]) -> RingTensor {
        let n = shape.iter().product();
        RingTensor::new(shape.to_vec(), (0..n).map(|_| self.rng.gen()).collect())
            .expect("length matches shape")
    }

    fn split_add(&mut self, x: &RingTensor) -> (RingTensor, RingTensor) {
        let r = self.random(x.shape());
        let rest = x.sub(&r).expect("same shape");
        (r, rest)
    }

    fn split_xor(&mut self, x: &RingTensor) -> (RingTensor, RingTensor) {
        let r = self.random(x.shape());
        let rest = x.xor(&r).expect("same shape");
        (r, rest)
    }

    pub fn gen_beaver(&mut self, shape: &[usize], flavor: Flavor) -> (BeaverTriple, BeaverTriple) {
        let a = self.random(shape);
        let b = self.random(shape);
        let (kind, c, split): (_, _, fn(&mut Self, &RingTensor) -> (RingTensor, RingTensor)) = match flavor {
            Flavor::Arithmetic => (TripleKind::Elementwise, a.mul(&b).unwrap(), Self::split_add),
            Flavor::Binary => (TripleKind::Binary, a.and(&b).unwrap(), Self::split_xor),
        };
        self.count(format!("{kind:?}{shape:?}"));
        let (a0, a1) = split(self, &a);
        let (b0, b1) = split(self, &b);
        let (c0, c1) = split(self, &c);
        (
            BeaverTriple::from_parts(Party::Zero, kind, a0, b0, c0),
            BeaverTriple::from_parts(Party::One, kind, a1, b1, c1),
        )
    }

    /// Matrix triple with `C = A B` in the ring; shapes as for [`RingTensor::matmul`].
    pub fn gen_matmul(&mut self, lhs: &[usize], rhs: &[usize]) -> Result<(BeaverTriple, BeaverTriple)> {
        let a = self.random(lhs);
        let b = self.random(rhs);
        let c = a
            .matmul(&b)
            .map_err(|_| Error::shape("matmul triple", lhs, rhs))?;
        self.count(format!("Matmul{lhs:?}x{rhs:?}"));
        let (a0, a1) = self.split_add(&a);
        let (b0, b1) = self.split_add(&b);
        let (c0, c1) = self.split_add(&c);
        Ok((
            BeaverTriple::from_parts(Party::Zero, TripleKind::Matmul, a0, b0, c0),
            BeaverTriple::from_parts(Party::One, TripleKind::Matmul, a1, b1, c1),
        ))
    }
}

/// A party's view of the dealer stream: yields only that party's shares.
pub struct TripleSource {
    party: Party,
    dealer: TripleDealer,
}

impl TripleSource {
    pub fn new(party: Party, seed: u64) -> Self {
        TripleSource {
            party,
            dealer: TripleDealer::new(seed),
        }
    }

    fn pick(&self, pair: (BeaverTriple, BeaverTriple)) -> BeaverTriple {
        match self.party {
            Party::Zero => pair.0,
            Party::One => pair.1,
        }
    }

    pub fn elementwise(&mut self, shape: &[usize]) -> BeaverTriple {
        let pair = self.dealer.gen_beaver(shape, Flavor::Arithmetic);
        self.pick(pair)
    }

    pub fn binary(&mut self, shape: &[usize]) -> BeaverTriple {
        let pair = self.dealer.gen_beaver(shape, Flavor::Binary);
        self.pick(pair)
    }

    pub fn matmul(&mut self, lhs: &[usize], rhs: &[usize]) -> Result<BeaverTriple> {
        let pair = self.dealer.gen_matmul(lhs, rhs)?;
        Ok(self.pick(pair))
    }

    pub fn issued(&self) -> &BTreeMap<String, u64> {
        self.dealer.issued()
    }
}
