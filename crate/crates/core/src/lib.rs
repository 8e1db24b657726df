//! Two-party secret-sharing inference for low-rank linear-attention adapters.
//!
//! Layering, bottom up: [`ring`] (fixed-point tensors over Z/2^64),
//! [`sharing`] (additive and XOR shares, Beaver products, conversions),
//! [`runtime`] (channels, transports, metering), [`nn`] (private operators
//! and the adapter pipeline), [`cost`] (latency models and fitting) and
//! [`nas`] (latency-constrained architecture search).

pub mod cost;
pub mod error;
pub mod nas;
pub mod nn;
pub mod ring;
pub mod runtime;
pub mod sharing;

pub use error::{Error, Result};
