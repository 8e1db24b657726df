use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::beaver::{and_batch, beaver_batch, MulJob, Product};
use super::dealer::TripleSource;
use super::{share_arith, ArithShare, BinShare};
use crate::error::{Error, Result};
use crate::ring::{FixedPointConfig, FixedTensor, RingTensor};
use crate::runtime::{Channel, Party};

/// Salt separating each party's local randomness from the shared dealer stream.
const LOCAL_RNG_SALT: u64 = 0x5eed_0f_10ca1;

/// A party's protocol context: its channel endpoint, its half of the dealer
/// stream and local randomness for sharing inputs.
///
/// Both parties must build their sessions from the same seed and issue the
/// same sequence of operations.
pub struct Session<'c> {
    ch: &'c mut Channel,
    triples: TripleSource,
    rng: ChaCha20Rng,
    cfg: FixedPointConfig,
}

impl<'c> Session<'c> {
    pub fn new(ch: &'c mut Channel, seed: u64, cfg: FixedPointConfig) -> Self {
        let party = ch.party();
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ LOCAL_RNG_SALT);
        rng.set_stream(1 + party.index() as u64);
        Session {
            triples: TripleSource::new(party, seed),
            ch,
            rng,
            cfg,
        }
    }

    pub fn party(&self) -> Party {
        self.ch.party()
    }

    pub fn config(&self) -> FixedPointConfig {
        self.cfg
    }

    pub fn channel(&mut self) -> &mut Channel {
        self.ch
    }

    pub fn triples(&self) -> &TripleSource {
        &self.triples
    }

    pub fn triples_mut(&mut self) -> &mut TripleSource {
        &mut self.triples
    }

    /// Runs `f` with `name` pushed onto the meter's scope path.
    pub fn scoped<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.ch.enter(name);
        let out = f(self);
        self.ch.exit();
        out
    }

    /// Secret-shares a tensor held by `owner`. The owner passes `Some(value)`,
    /// the other party `None` together with the agreed shape. The peer's share
    /// travels one way; `offline` routes it to the setup counters instead of
    /// the online ones (used for model weights).
    pub fn input(
        &mut self,
        owner: Party,
        value: Option<&FixedTensor>,
        shape: &[usize],
        offline: bool,
    ) -> Result<ArithShare> {
        let me = self.party();
        if me == owner {
            let value = value.ok_or_else(|| Error::Protocol("input owner has no value".into()))?;
            if value.shape() != shape {
                return Err(Error::shape("input", shape, value.shape()));
            }
            let (s0, s1) = share_arith(value, &mut self.rng);
            let (mine, theirs) = match me {
                Party::Zero => (s0, s1),
                Party::One => (s1, s0),
            };
            if offline {
                self.ch.send_offline(theirs.ring().data())?;
            } else {
                self.ch.send("input", theirs.ring().data())?;
            }
            Ok(ArithShare::new(me, mine.ring().clone(), self.cfg))
        } else {
            let words = if offline { self.ch.recv_offline()? } else { self.ch.recv("input")? };
            let n: usize = shape.iter().product();
            if words.len() != n {
                return Err(Error::Protocol(format!("input share has {} words, expected {n}", words.len())));
            }
            Ok(ArithShare::new(me, RingTensor::new(shape.to_vec(), words)?, self.cfg))
        }
    }

    /// Delivers `x` to `receiver` only: the other party sends its share one
    /// way. Returns the plaintext at the receiver and `None` elsewhere.
    pub fn reveal_to(&mut self, x: &ArithShare, receiver: Party) -> Result<Option<FixedTensor>> {
        if self.party() == receiver {
            let words = self.ch.recv("output")?;
            let theirs = RingTensor::new(x.shape().to_vec(), words)?;
            Ok(Some(FixedTensor::from_ring(x.ring().add(&theirs)?, x.config())))
        } else {
            self.ch.send("output", x.ring().data())?;
            Ok(None)
        }
    }

    /// Ring products in one round, without rescaling.
    pub fn beaver_raw(&mut self, jobs: &[(Product, &ArithShare, &ArithShare)], op: &str) -> Result<Vec<ArithShare>> {
        let mut batch = Vec::with_capacity(jobs.len());
        for &(product, x, y) in jobs {
            let triple = match product {
                Product::Elementwise => {
                    if x.shape() != y.shape() {
                        return Err(Error::shape("mul", x.shape(), y.shape()));
                    }
                    self.triples.elementwise(x.shape())
                }
                Product::Matmul => self.triples.matmul(x.shape(), y.shape())?,
            };
            batch.push(MulJob { product, x, y, triple });
        }
        beaver_batch(&batch, self.ch, op)
    }

    /// Fixed-point products in one round, each truncated back to scale `2^f`.
    pub fn products(&mut self, jobs: &[(Product, &ArithShare, &ArithShare)], op: &str) -> Result<Vec<ArithShare>> {
        let f = self.cfg.frac_bits();
        Ok(self.beaver_raw(jobs, op)?.into_iter().map(|z| z.truncate(f)).collect())
    }

    pub fn mul(&mut self, x: &ArithShare, y: &ArithShare) -> Result<ArithShare> {
        Ok(self.products(&[(Product::Elementwise, x, y)], "mul")?.remove(0))
    }

    pub fn matmul(&mut self, x: &ArithShare, y: &ArithShare) -> Result<ArithShare> {
        Ok(self.products(&[(Product::Matmul, x, y)], "matmul")?.remove(0))
    }

    /// Bitwise ANDs in one round.
    pub fn and_many(&mut self, pairs: &[(&BinShare, &BinShare)], op: &str) -> Result<Vec<BinShare>> {
        let triples = pairs.iter().map(|(x, _)| self.triples.binary(x.shape())).collect();
        and_batch(pairs, triples, self.ch, op)
    }
}
