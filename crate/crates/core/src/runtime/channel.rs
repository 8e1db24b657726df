use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::meter::CommMeter;
use super::transport::{decode_frame, encode_frame, Transport};
use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Frame tag reserved for [`Channel::control`] messages.
pub const CONTROL_TAG: u32 = u32::MAX;

/// The two roles. Party 0 is the model user (holds the input features),
/// party 1 the model service (holds the adapter weights).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Party {
    Zero,
    One,
}

impl Party {
    pub fn index(self) -> usize {
        match self {
            Party::Zero => 0,
            Party::One => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Party> {
        match i {
            0 => Ok(Party::Zero),
            1 => Ok(Party::One),
            _ => Err(Error::InvalidConfig(format!("party id must be 0 or 1, got {i}"))),
        }
    }

    pub fn other(self) -> Party {
        match self {
            Party::Zero => Party::One,
            Party::One => Party::Zero,
        }
    }
}

/// Whether an exchanged payload is masked (Beaver openings, fresh shares) or
/// a plain reveal of secret-shared data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Disclosure {
    Masked,
    Reveal,
}

/// One party's endpoint. Counts rounds at the protocol layer and checks that
/// frames arrive with the expected sequence tag.
pub struct Channel {
    party: Party,
    transport: Box<dyn Transport>,
    meter: CommMeter,
    scope: Vec<String>,
    send_seq: u32,
    recv_seq: u32,
    timeout: Duration,
    audit: bool,
}

impl Channel {
    pub fn new(party: Party, transport: impl Transport + 'static) -> Self {
        Channel {
            party,
            transport: Box::new(transport),
            meter: CommMeter::new(),
            scope: Vec::new(),
            send_seq: 0,
            recv_seq: 0,
            timeout: DEFAULT_TIMEOUT,
            audit: false,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn meter(&self) -> &CommMeter {
        &self.meter
    }

    pub fn take_meter(&mut self) -> CommMeter {
        std::mem::take(&mut self.meter)
    }

    /// While auditing, [`Disclosure::Reveal`] exchanges are refused.
    /// Returns the previous setting.
    pub fn set_audit(&mut self, on: bool) -> bool {
        std::mem::replace(&mut self.audit, on)
    }

    pub fn enter(&mut self, scope: &str) {
        self.scope.push(scope.to_owned());
    }

    pub fn exit(&mut self) {
        self.scope.pop();
    }

    fn key(&self, op: &str) -> String {
        let mut k = self.scope.join("/");
        if !k.is_empty() {
            k.push('/');
        }
        k.push_str(op);
        k
    }

    fn send_frame(&mut self, payload: &[u64]) -> Result<()> {
        let frame = encode_frame(self.send_seq, payload);
        self.send_seq = self.send_seq.wrapping_add(1);
        self.transport.send(&frame)
    }

    fn recv_frame(&mut self) -> Result<Vec<u64>> {
        let frame = self.transport.recv(self.timeout)?;
        let (tag, words) = decode_frame(&frame)?;
        if tag != self.recv_seq {
            return Err(Error::Protocol(format!(
                "expected frame {} from peer, got {tag}",
                self.recv_seq
            )));
        }
        self.recv_seq = self.recv_seq.wrapping_add(1);
        Ok(words)
    }

    /// One synchronized round: send `payload`, receive the peer's payload of
    /// the same length.
    pub fn exchange(&mut self, op: &str, disclosure: Disclosure, payload: &[u64]) -> Result<Vec<u64>> {
        if self.audit && disclosure == Disclosure::Reveal {
            return Err(Error::Audit(format!(
                "reveal of unmasked data at {} during audited execution",
                self.key(op)
            )));
        }
        // party 1 reads first so two large writes never block each other on TCP
        let theirs = match self.party {
            Party::Zero => {
                self.send_frame(payload)?;
                self.recv_frame()?
            }
            Party::One => {
                let t = self.recv_frame()?;
                self.send_frame(payload)?;
                t
            }
        };
        if theirs.len() != payload.len() {
            return Err(Error::Protocol(format!(
                "{}: sent {} words but peer sent {}",
                self.key(op),
                payload.len(),
                theirs.len()
            )));
        }
        let key = self.key(op);
        self.meter.record_round(key, 8 * payload.len() as u64);
        Ok(theirs)
    }

    /// One-way online message (input or output delivery): bytes, no round.
    pub fn send(&mut self, op: &str, payload: &[u64]) -> Result<()> {
        self.send_frame(payload)?;
        let key = self.key(op);
        self.meter.record_send(key, 8 * payload.len() as u64);
        Ok(())
    }

    pub fn recv(&mut self, _op: &str) -> Result<Vec<u64>> {
        self.recv_frame()
    }

    /// Unmetered exchange outside the protocol sequence, for session checks
    /// and bookkeeping (config fingerprints, meter totals). Lengths may differ.
    pub fn control(&mut self, payload: &[u64]) -> Result<Vec<u64>> {
        let frame = encode_frame(CONTROL_TAG, payload);
        let recv = |t: &mut Box<dyn Transport>, timeout| -> Result<Vec<u64>> {
            let (tag, words) = decode_frame(&t.recv(timeout)?)?;
            if tag != CONTROL_TAG {
                return Err(Error::Protocol(format!("expected a control frame from peer, got frame {tag}")));
            }
            Ok(words)
        };
        match self.party {
            Party::Zero => {
                self.transport.send(&frame)?;
                recv(&mut self.transport, self.timeout)
            }
            Party::One => {
                let t = recv(&mut self.transport, self.timeout)?;
                self.transport.send(&frame)?;
                Ok(t)
            }
        }
    }

    /// Setup-phase traffic, kept out of the online counters.
    pub fn send_offline(&mut self, payload: &[u64]) -> Result<()> {
        self.send_frame(payload)?;
        self.meter.record_offline(8 * payload.len() as u64);
        Ok(())
    }

    pub fn recv_offline(&mut self) -> Result<Vec<u64>> {
        self.recv_frame()
    }
}
