//! Beaver multiplication: one masked opening round per batch.
//!
//! Products come back at the raw ring scale (`2^2f` for two fixed-point
//! operands); rescaling is the caller's job.

use super::dealer::{BeaverTriple, TripleKind};
use super::{ArithShare, BinShare};
use crate::error::{Error, Result};
use crate::ring::RingTensor;
use crate::runtime::{Channel, Disclosure, Party};

/// Which product a batched job computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Product {
    Elementwise,
    /// 2-D or batched 3-D matrix product, as in [`RingTensor::matmul`].
    Matmul,
}

impl Product {
    fn apply(self, a: &RingTensor, b: &RingTensor) -> Result<RingTensor> {
        match self {
            Product::Elementwise => a.mul(b),
            Product::Matmul => a.matmul(b),
        }
    }

    fn expected(self) -> TripleKind {
        match self {
            Product::Elementwise => TripleKind::Elementwise,
            Product::Matmul => TripleKind::Matmul,
        }
    }
}

/// One product in a batch: `x (*) y` using `triple`.
pub struct MulJob<'a> {
    pub product: Product,
    pub x: &'a ArithShare,
    pub y: &'a ArithShare,
    pub triple: BeaverTriple,
}

fn check_triple(
    x: &RingTensor,
    y: &RingTensor,
    t: &BeaverTriple,
    kind: TripleKind,
    party: Party,
) -> Result<()> {
    if t.kind != kind || t.party != party {
        return Err(Error::Protocol(format!(
            "expected a {kind:?} triple share for {party:?}, got {:?} for {:?}",
            t.kind, t.party
        )));
    }
    if t.a.shape() != x.shape() {
        return Err(Error::shape("beaver triple", x.shape(), t.a.shape()));
    }
    if t.b.shape() != y.shape() {
        return Err(Error::shape("beaver triple", y.shape(), t.b.shape()));
    }
    Ok(())
}

/// Runs every job in a single round: all `eps = x - a` and `delta = y - b`
/// masks go out in one message, then each party computes
/// `c + eps (*) b + a (*) delta`, with party 0 adding `eps (*) delta`.
pub fn beaver_batch(jobs: &[MulJob<'_>], ch: &mut Channel, op: &str) -> Result<Vec<ArithShare>> {
    let party = ch.party();
    let mut masked = Vec::new();
    for job in jobs {
        if job.x.party() != party || job.y.party() != party {
            return Err(Error::Protocol("share does not belong to this party".into()));
        }
        check_triple(job.x.ring(), job.y.ring(), &job.triple, job.product.expected(), party)?;
        masked.push(job.x.ring().sub(&job.triple.a)?);
        masked.push(job.y.ring().sub(&job.triple.b)?);
    }
    let opened = open_masked(&masked, ch, op, |m, t| m.wrapping_add(t))?;
    jobs.iter()
        .zip(opened.chunks(2))
        .map(|(job, ed)| {
            let (eps, delta) = (&ed[0], &ed[1]);
            let p = job.product;
            let mut z = job.triple.c.add(&p.apply(eps, &job.triple.b)?)?;
            z = z.add(&p.apply(&job.triple.a, delta)?)?;
            if party == Party::Zero {
                z = z.add(&p.apply(eps, delta)?)?;
            }
            Ok(job.x.lift(z))
        })
        .collect()
}

/// Sends all local masks in one exchange and combines them with the peer's.
fn open_masked(
    local: &[RingTensor],
    ch: &mut Channel,
    op: &str,
    combine: impl Fn(u64, u64) -> u64,
) -> Result<Vec<RingTensor>> {
    let payload: Vec<u64> = local.iter().flat_map(|t| t.data().iter().copied()).collect();
    let theirs = ch.exchange(op, Disclosure::Masked, &payload)?;
    let mut off = 0;
    local
        .iter()
        .map(|t| {
            let n = t.len();
            let data = t.data().iter().zip(&theirs[off..off + n]).map(|(a, b)| combine(*a, *b)).collect();
            off += n;
            RingTensor::new(t.shape().to_vec(), data)
        })
        .collect()
}

/// Elementwise ring product `x * y` (one round, no truncation).
pub fn mul_beaver(x: &ArithShare, y: &ArithShare, triple: BeaverTriple, ch: &mut Channel) -> Result<ArithShare> {
    let job = MulJob { product: Product::Elementwise, x, y, triple };
    Ok(beaver_batch(&[job], ch, "mul")?.remove(0))
}

/// Matrix ring product `x y` (one round, no truncation).
pub fn matmul_beaver(x: &ArithShare, y: &ArithShare, triple: BeaverTriple, ch: &mut Channel) -> Result<ArithShare> {
    let job = MulJob { product: Product::Matmul, x, y, triple };
    Ok(beaver_batch(&[job], ch, "matmul")?.remove(0))
}

/// Bitwise AND of XOR-shared words, all pairs in one round.
pub fn and_batch(
    pairs: &[(&BinShare, &BinShare)],
    triples: Vec<BeaverTriple>,
    ch: &mut Channel,
    op: &str,
) -> Result<Vec<BinShare>> {
    let party = ch.party();
    if pairs.len() != triples.len() {
        return Err(Error::Protocol(format!("{} AND pairs but {} triples", pairs.len(), triples.len())));
    }
    let mut masked = Vec::new();
    for ((x, y), t) in pairs.iter().zip(&triples) {
        check_triple(x.ring(), y.ring(), t, TripleKind::Binary, party)?;
        if x.shape() != y.shape() {
            return Err(Error::shape("and", x.shape(), y.shape()));
        }
        masked.push(x.ring().xor(&t.a)?);
        masked.push(y.ring().xor(&t.b)?);
    }
    let opened = open_masked(&masked, ch, op, |m, t| m ^ t)?;
    triples
        .iter()
        .zip(opened.chunks(2))
        .map(|(t, ed)| {
            let (eps, delta) = (&ed[0], &ed[1]);
            let mut z = t.c.xor(&eps.and(&t.b)?)?.xor(&t.a.and(delta)?)?;
            if party == Party::Zero {
                z = z.xor(&eps.and(delta)?)?;
            }
            Ok(BinShare::new(party, z))
        })
        .collect()
}

pub fn and_beaver(x: &BinShare, y: &BinShare, triple: BeaverTriple, ch: &mut Channel) -> Result<BinShare> {
    Ok(and_batch(&[(x, y)], vec![triple], ch, "and")?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::FixedPointConfig;
    use crate::runtime::{run_two_party, TransportKind};

    fn one(v: u64) -> RingTensor {
        RingTensor::new(vec![1], vec![v]).unwrap()
    }

    #[test]
    fn hand_example_three_times_four() {
        // x = 3, y = 4 with a = 1, b = 2, c = 2; shares chosen by hand
        let cfg = FixedPointConfig::default();
        let share = |p, v| ArithShare::new(p, one(v), cfg);
        let triple = |p, a, b, c| BeaverTriple::from_parts(p, TripleKind::Elementwise, one(a), one(b), one(c));
        let (x0, x1) = (share(Party::Zero, 1), share(Party::One, 2));
        let (y0, y1) = (share(Party::Zero, 4), share(Party::One, 0));
        let t0 = triple(Party::Zero, 1, 1, 1);
        let t1 = triple(Party::One, 0, 1, 1);
        let run = run_two_party(
            TransportKind::InProcess,
            move |ch| mul_beaver(&x0, &y0, t0, ch),
            move |ch| mul_beaver(&x1, &y1, t1, ch),
        )
        .unwrap();
        let z = run.out0.ring().data()[0].wrapping_add(run.out1.ring().data()[0]);
        assert_eq!(z, 12);
        assert_eq!(run.meter0.rounds(), 1);
        // eps and delta, 8 bytes each
        assert_eq!(run.meter0.bytes_sent(), 16);
        assert_eq!(run.meter1.bytes_sent(), 16);
    }

    #[test]
    fn wrong_triple_kind_is_rejected() {
        let cfg = FixedPointConfig::default();
        let x = ArithShare::new(Party::Zero, one(1), cfg);
        let t = BeaverTriple::from_parts(Party::Zero, TripleKind::Binary, one(0), one(0), one(0));
        let err = run_two_party(
            TransportKind::InProcess,
            move |ch| mul_beaver(&x, &x, t, ch),
            |_| Ok(()),
        )
        .unwrap_err();
        assert!(err.is_protocol());
    }
}
