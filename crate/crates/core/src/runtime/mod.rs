//! Two-party execution: channels, transports, communication metering and the
//! closed-form network model.

mod channel;
mod meter;
mod network;
pub mod transport;

use std::net::TcpListener;
use std::time::Duration;

pub use channel::{Channel, Disclosure, Party, CONTROL_TAG, DEFAULT_TIMEOUT};
pub use meter::{CommMeter, OpCount};
pub use network::{simulate_latency, NetworkEnv};

use crate::error::{Error, Result};
use crate::ring::{FixedTensor, RingTensor};
use crate::sharing::ArithShare;
use transport::{in_process, TcpTransport};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransportKind {
    InProcess,
    /// Real TCP sockets over the loopback interface, both parties in this process.
    TcpLoopback,
}

#[derive(Debug)]
pub struct TwoPartyRun<A, B> {
    pub out0: A,
    pub out1: B,
    pub meter0: CommMeter,
    pub meter1: CommMeter,
}

impl<A, B> TwoPartyRun<A, B> {
    pub fn combined_meter(&self) -> CommMeter {
        CommMeter::combine(&self.meter0, &self.meter1)
    }
}

/// Builds the two connected channels for `kind`.
pub fn connect_pair(kind: TransportKind, timeout: Duration) -> Result<(Channel, Channel)> {
    match kind {
        TransportKind::InProcess => {
            let (t0, t1) = in_process();
            Ok((
                Channel::new(Party::Zero, t0).with_timeout(timeout),
                Channel::new(Party::One, t1).with_timeout(timeout),
            ))
        }
        TransportKind::TcpLoopback => {
            let listener = TcpListener::bind("127.0.0.1:0").map_err(Error::Transport)?;
            let addr = listener.local_addr().map_err(Error::Transport)?;
            let acceptor = std::thread::spawn(move || TcpTransport::accept(&listener));
            let t1 = TcpTransport::connect(addr, timeout)?;
            let t0 = acceptor
                .join()
                .map_err(|_| Error::Protocol("accept thread panicked".into()))??;
            Ok((
                Channel::new(Party::Zero, t0).with_timeout(timeout),
                Channel::new(Party::One, t1).with_timeout(timeout),
            ))
        }
    }
}

/// One endpoint of a two-process run: party 0 listens on `addr`, party 1
/// connects to it, retrying for up to `timeout`.
pub fn tcp_channel(party: Party, addr: &str, timeout: Duration) -> Result<Channel> {
    let t = match party {
        Party::Zero => TcpTransport::listen(addr)?,
        Party::One => TcpTransport::connect(addr, timeout)?,
    };
    Ok(Channel::new(party, t).with_timeout(timeout))
}

/// Runs both parties concurrently to completion and returns their outputs
/// together with each party's meter.
pub fn run_two_party<A, B, F0, F1>(kind: TransportKind, p0: F0, p1: F1) -> Result<TwoPartyRun<A, B>>
where
    A: Send,
    B: Send,
    F0: FnOnce(&mut Channel) -> Result<A> + Send,
    F1: FnOnce(&mut Channel) -> Result<B> + Send,
{
    run_two_party_with_timeout(kind, DEFAULT_TIMEOUT, p0, p1)
}

pub fn run_two_party_with_timeout<A, B, F0, F1>(
    kind: TransportKind,
    timeout: Duration,
    p0: F0,
    p1: F1,
) -> Result<TwoPartyRun<A, B>>
where
    A: Send,
    B: Send,
    F0: FnOnce(&mut Channel) -> Result<A> + Send,
    F1: FnOnce(&mut Channel) -> Result<B> + Send,
{
    let (mut c0, mut c1) = connect_pair(kind, timeout)?;
    let (r0, r1) = std::thread::scope(|s| {
        // each endpoint is dropped as soon as its party finishes, so a failing
        // party unblocks its peer instead of leaving it to time out
        let h0 = s.spawn(move || p0(&mut c0).map(|o| (o, c0.take_meter())));
        let h1 = s.spawn(move || p1(&mut c1).map(|o| (o, c1.take_meter())));
        (join(h0), join(h1))
    });
    match (r0, r1) {
        (Ok((out0, meter0)), Ok((out1, meter1))) => Ok(TwoPartyRun {
            out0,
            out1,
            meter0,
            meter1,
        }),
        (Err(e0), Err(e1)) => Err(if is_hangup(&e0) { e1 } else { e0 }),
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

fn join<T>(h: std::thread::ScopedJoinHandle<'_, Result<T>>) -> Result<T> {
    h.join()
        .unwrap_or_else(|_| Err(Error::Protocol("party thread panicked".into())))
}

fn is_hangup(e: &Error) -> bool {
    matches!(e, Error::Protocol(m) if m == "peer hung up")
}

/// Reveals a shared tensor to both parties (one round).
pub fn open_values(share: &ArithShare, ch: &mut Channel) -> Result<FixedTensor> {
    Ok(open_many(&[share], ch)?.remove(0))
}

/// Reveals several shared tensors in a single round.
pub fn open_many(shares: &[&ArithShare], ch: &mut Channel) -> Result<Vec<FixedTensor>> {
    let payload: Vec<u64> = shares.iter().flat_map(|s| s.ring().data().iter().copied()).collect();
    let theirs = ch.exchange("open", Disclosure::Reveal, &payload)?;
    let mut off = 0;
    shares
        .iter()
        .map(|s| {
            let n = s.ring().len();
            let sum: Vec<u64> = s.ring().data()
                .iter()
                .zip(&theirs[off..off + n])
                .map(|(a, b)| a.wrapping_add(*b))
                .collect();
            off += n;
            Ok(FixedTensor::from_ring(
                RingTensor::new(s.ring().shape().to_vec(), sum)?,
                s.config(),
            ))
        })
        .collect()
}
