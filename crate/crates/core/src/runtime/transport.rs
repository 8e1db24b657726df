//! Frame transports. Wire frame: magic `"CP01"`, round tag `u32` LE,
//! payload byte length `u64` LE, then payload words as `u64` LE.

use std::io::{ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

pub const FRAME_MAGIC: [u8; 4] = *b"CP01";
pub const FRAME_HEADER_LEN: usize = 16;

pub fn encode_frame(tag: u32, payload: &[u64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + payload.len() * 8);
    out.extend_from_slice(&FRAME_MAGIC);
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&((payload.len() * 8) as u64).to_le_bytes());
    for w in payload {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

/// Validates a header and returns `(tag, payload byte length)`.
pub fn decode_header(head: &[u8]) -> Result<(u32, usize)> {
    if head.len() < FRAME_HEADER_LEN {
        return Err(Error::Frame(format!("short header: {} bytes", head.len())));
    }
    if head[..4] != FRAME_MAGIC {
        return Err(Error::Frame(format!("bad magic {:02x?}", &head[..4])));
    }
    let tag = u32::from_le_bytes(head[4..8].try_into().unwrap());
    let len = u64::from_le_bytes(head[8..16].try_into().unwrap());
    if len % 8 != 0 {
        return Err(Error::Frame(format!("payload length {len} is not a multiple of 8")));
    }
    let len = usize::try_from(len).map_err(|_| Error::Frame("payload too large".into()))?;
    Ok((tag, len))
}

pub fn decode_frame(frame: &[u8]) -> Result<(u32, Vec<u64>)> {
    let (tag, len) = decode_header(frame)?;
    let body = &frame[FRAME_HEADER_LEN..];
    if body.len() != len {
        return Err(Error::Frame(format!(
            "declared {len} payload bytes, frame carries {}",
            body.len()
        )));
    }
    let words = body
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((tag, words))
}

pub(crate) fn hung_up() -> Error {
    Error::Protocol("peer hung up".into())
}

/// Moves whole encoded frames between the two endpoints, in FIFO order.
pub trait Transport: Send {
    fn send(&mut self, frame: &[u8]) -> Result<()>;
    fn recv(&mut self, timeout: Duration) -> Result<Vec<u8>>;
}

pub struct InProcessTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// A connected pair of in-memory endpoints (party 0, party 1).
pub fn in_process() -> (InProcessTransport, InProcessTransport) {
    let (tx0, rx1) = mpsc::channel();
    let (tx1, rx0) = mpsc::channel();
    (
        InProcessTransport { tx: tx0, rx: rx0 },
        InProcessTransport { tx: tx1, rx: rx1 },
    )
}

impl Transport for InProcessTransport {
    fn send(&mut self, frame: &[u8]) -> Result<()> {
        self.tx.send(frame.to_vec()).map_err(|_| hung_up())
    }

    fn recv(&mut self, timeout: Duration) -> Result<Vec<u8>> {
        match self.rx.recv_timeout(timeout) {
            Ok(f) => Ok(f),
            Err(RecvTimeoutError::Timeout) => Err(Error::Protocol(format!(
                "no frame within {timeout:?}; parties disagree on the protocol or deadlocked"
            ))),
            Err(RecvTimeoutError::Disconnected) => Err(hung_up()),
        }
    }
}

pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    /// Party 0 side: accepts one connection.
    pub fn accept(listener: &TcpListener) -> Result<Self> {
        let (stream, _) = listener.accept().map_err(Error::Transport)?;
        Self::from_stream(stream)
    }

    pub fn listen(addr: impl ToSocketAddrs) -> Result<Self> {
        let listener = TcpListener::bind(addr).map_err(Error::Transport)?;
        Self::accept(&listener)
    }

    /// Party 1 side: retries until the listener is up or `patience` runs out.
    pub fn connect(addr: impl ToSocketAddrs + Clone, patience: Duration) -> Result<Self> {
        let deadline = Instant::now() + patience;
        loop {
            match TcpStream::connect(addr.clone()) {
                Ok(stream) => return Self::from_stream(stream),
                Err(e) if Instant::now() >= deadline => return Err(Error::Transport(e)),
                Err(_) => std::thread::sleep(Duration::from_millis(20)),
            }
        }
    }

    fn from_stream(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true).map_err(Error::Transport)?;
        Ok(TcpTransport { stream })
    }

    fn read_exact_or_hangup(&mut self, buf: &mut [u8], timeout: Duration) -> Result<()> {
        self.stream
            .set_read_timeout(Some(timeout))
            .map_err(Error::Transport)?;
        self.stream.read_exact(buf).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset => hung_up(),
            ErrorKind::WouldBlock | ErrorKind::TimedOut => Error::Protocol(format!(
                "no frame within {timeout:?}; parties disagree on the protocol or deadlocked"
            )),
            _ => Error::Transport(e),
        })
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, frame: &[u8]) -> Result<()> {
        self.stream.write_all(frame).map_err(Error::Transport)
    }

    fn recv(&mut self, timeout: Duration) -> Result<Vec<u8>> {
        let mut frame = vec![0u8; FRAME_HEADER_LEN];
        self.read_exact_or_hangup(&mut frame, timeout)?;
        let (_, len) = decode_header(&frame)?;
        frame.resize(FRAME_HEADER_LEN + len, 0);
        self.read_exact_or_hangup(&mut frame[FRAME_HEADER_LEN..], timeout)?;
        Ok(frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_layout() {
        let f = encode_frame(3, &[1, 2]);
        assert_eq!(&f[..4], b"CP01");
        assert_eq!(&f[4..8], &3u32.to_le_bytes());
        assert_eq!(&f[8..16], &16u64.to_le_bytes());
        assert_eq!(decode_frame(&f).unwrap(), (3, vec![1, 2]));
    }

    #[test]
    fn malformed_frames_are_rejected() {
        let mut f = encode_frame(0, &[9]);
        f[1] = b'X';
        assert!(matches!(decode_frame(&f), Err(Error::Frame(_))));

        let mut f = encode_frame(0, &[9]);
        f.pop();
        assert!(matches!(decode_frame(&f), Err(Error::Frame(_))));

        let mut f = encode_frame(0, &[9]);
        f[8] = 7;
        assert!(decode_frame(&f).is_err());
    }

    #[test]
    fn in_process_timeout_and_hangup() {
        let (mut a, b) = in_process();
        let e = a.recv(Duration::from_millis(10)).unwrap_err();
        assert!(e.to_string().contains("no frame"));
        drop(b);
        assert!(a.recv(Duration::from_millis(10)).is_err());
    }

    #[test]
    fn tcp_megabyte_echo() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let payload: Vec<u64> = (0..131_072u64).map(|i| i.wrapping_mul(0x9e37_79b9)).collect();
        let frame = encode_frame(5, &payload);
        let echo = std::thread::spawn(move || {
            let mut t = TcpTransport::accept(&listener).unwrap();
            let f = t.recv(Duration::from_secs(10)).unwrap();
            t.send(&f).unwrap();
        });
        let mut c = TcpTransport::connect(addr, Duration::from_secs(5)).unwrap();
        c.send(&frame).unwrap();
        let back = c.recv(Duration::from_secs(10)).unwrap();
        echo.join().unwrap();
        assert_eq!(back.len(), FRAME_HEADER_LEN + (1 << 20));
        assert_eq!(decode_frame(&back).unwrap(), (5, payload));
    }

    #[test]
    fn tcp_rejects_bad_magic() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let h = std::thread::spawn(move || {
            let mut t = TcpTransport::accept(&listener).unwrap();
            t.recv(Duration::from_secs(5))
        });
        let mut c = TcpTransport::connect(addr, Duration::from_secs(5)).unwrap();
        let mut f = encode_frame(0, &[1]);
        f[..4].copy_from_slice(b"XXXX");
        c.send(&f).unwrap();
        assert!(matches!(h.join().unwrap(), Err(Error::Frame(_))));
    }
}
