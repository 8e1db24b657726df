//! Conversions between additive and XOR sharing, and sign extraction.
//!
//! `a2b` adds the two parties' additive shares inside a binary circuit with a
//! Kogge-Stone carry-lookahead adder: one round for the generate bits
//! `x0 AND x1`, then one round per prefix level (1, 2, 4, 8, 16, 32).

use super::beaver::Product;
use super::{ArithShare, BinShare, Session};
use crate::error::Result;
use crate::ring::RingTensor;
use crate::runtime::Party;

/// Prefix distances of the 64-bit Kogge-Stone adder.
const KS_LEVELS: [u32; 6] = [1, 2, 4, 8, 16, 32];

/// Arithmetic to binary sharing, 7 rounds.
pub fn a2b(x: &ArithShare, s: &mut Session<'_>) -> Result<BinShare> {
    s.scoped("a2b", |s| {
        let party = s.party();
        let zero = RingTensor::zeros(x.shape());
        // trivial XOR sharings of each party's own word: A = (x0, 0), B = (0, x1)
        let (a, b) = match party {
            Party::Zero => (x.ring().clone(), zero),
            Party::One => (zero, x.ring().clone()),
        };
        let a = BinShare::new(party, a);
        let b = BinShare::new(party, b);
        let p0 = a.xor(&b)?;
        let mut g = s.and_many(&[(&a, &b)], "generate")?.remove(0);
        let mut p = p0.clone();
        for (i, &k) in KS_LEVELS.iter().enumerate() {
            let gs = g.shl(k);
            if i + 1 == KS_LEVELS.len() {
                let t = s.and_many(&[(&p, &gs)], "prefix")?.remove(0);
                g = g.xor(&t)?;
            } else {
                let ps = p.shl(k);
                let mut out = s.and_many(&[(&p, &gs), (&p, &ps)], "prefix")?;
                let pp = out.pop().expect("two results");
                g = g.xor(&out.pop().expect("two results"))?;
                p = pp;
            }
        }
        p0.xor(&g.shl(1))
    })
}

/// Lowest-bit binary share to an arithmetic share of that bit, at integer
/// scale. One round: `b0 + b1 - 2 b0 b1`.
pub fn bit_to_arith(b: &BinShare, s: &mut Session<'_>) -> Result<ArithShare> {
    let party = s.party();
    let cfg = s.config();
    let bit = b.ring().map(|v| v & 1);
    debug_assert!(b.ring().data().iter().all(|v| v >> 1 == 0), "bit_to_arith expects 0/1 words");
    let zero = RingTensor::zeros(b.shape());
    let (u, v) = match party {
        Party::Zero => (bit, zero),
        Party::One => (zero, bit),
    };
    let u = ArithShare::new(party, u, cfg);
    let v = ArithShare::new(party, v, cfg);
    let uv = s.beaver_raw(&[(Product::Elementwise, &u, &v)], "b2a")?.remove(0);
    u.add(&v)?.sub(&uv.mul_int(2))
}

/// Full 64-bit binary to arithmetic conversion; all bits go through one
/// batched `bit_to_arith` round.
pub fn b2a_full(x: &BinShare, s: &mut Session<'_>) -> Result<ArithShare> {
    let n = x.ring().len();
    let mut bits = Vec::with_capacity(64 * n);
    for j in 0..64 {
        bits.extend(x.ring().data().iter().map(|w| (w >> j) & 1));
    }
    let planes = BinShare::new(x.party(), RingTensor::new(vec![64 * n], bits)?);
    let arith = bit_to_arith(&planes, s)?;
    let mut acc = vec![0u64; n];
    for (j, plane) in arith.ring().data().chunks(n).enumerate() {
        for (a, v) in acc.iter_mut().zip(plane) {
            *a = a.wrapping_add(v.wrapping_shl(j as u32));
        }
    }
    Ok(arith.lift(RingTensor::new(x.shape().to_vec(), acc)?))
}

/// Arithmetic share of `[x < 0]` (1 or 0, integer scale), 8 rounds.
pub fn ltz(x: &ArithShare, s: &mut Session<'_>) -> Result<ArithShare> {
    s.scoped("ltz", |s| {
        let bits = a2b(x, s)?;
        bit_to_arith(&bits.shr(63), s)
    })
}
