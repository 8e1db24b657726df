use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("value {value} does not fit the fixed-point headroom (|v * 2^{frac_bits}| must stay below 2^62)")]
    Overflow { value: f64, frac_bits: u32 },

    #[error("fixed-point config mismatch: {0} vs {1} fractional bits")]
    ConfigMismatch(u32, u32),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("frame decode error: {0}")]
    Frame(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("audit violation: {0}")]
    Audit(String),

    #[error("transport error: {0}")]
    Transport(#[source] io::Error),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("under-determined fit: {0}")]
    UnderDetermined(String),

    #[error("utility evaluator failed: {0}")]
    Evaluator(String),

    #[error("unknown network environment {0:?}")]
    UnknownEnv(String),

    #[error("empty search space: {0}")]
    EmptySpace(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures of the two-party exchange itself (transport, framing, protocol).
    pub fn is_protocol(&self) -> bool {
        matches!(
            self,
            Error::Frame(_) | Error::Protocol(_) | Error::Audit(_) | Error::Transport(_)
        )
    }
}
