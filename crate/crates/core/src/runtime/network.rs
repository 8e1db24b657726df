use serde::{Deserialize, Serialize};

use super::meter::CommMeter;
use crate::error::{Error, Result};

/// Link model: bandwidth in bits per second, one-way latency in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkEnv {
    pub label: String,
    pub bandwidth_bps: f64,
    pub latency_s: f64,
}

impl NetworkEnv {
    pub fn new(label: impl Into<String>, bandwidth_bps: f64, latency_s: f64) -> Result<Self> {
        if !(bandwidth_bps > 0.0) || !(latency_s >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "network needs bandwidth > 0 and latency >= 0, got {bandwidth_bps} bps / {latency_s} s"
            )));
        }
        Ok(NetworkEnv {
            label: label.into(),
            bandwidth_bps,
            latency_s,
        })
    }

    /// 1 Gbps, 0.5 ms.
    pub fn lan() -> Self {
        NetworkEnv {
            label: "LAN".into(),
            bandwidth_bps: 1e9,
            latency_s: 0.5e-3,
        }
    }

    /// 400 Mbps, 4 ms.
    pub fn wan() -> Self {
        NetworkEnv {
            label: "WAN".into(),
            bandwidth_bps: 400e6,
            latency_s: 4e-3,
        }
    }

    pub fn by_label(label: &str) -> Result<Self> {
        match label.to_ascii_uppercase().as_str() {
            "LAN" => Ok(Self::lan()),
            "WAN" => Ok(Self::wan()),
            _ => Err(Error::UnknownEnv(label.to_owned())),
        }
    }
}

/// Closed-form communication time: one round trip per round plus
/// serialization of every payload byte (both parties' bytes summed in `meter`).
pub fn simulate_latency(meter: &CommMeter, env: &NetworkEnv) -> f64 {
    meter.rounds() as f64 * 2.0 * env.latency_s + meter.bytes_sent() as f64 * 8.0 / env.bandwidth_bps
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_examples() {
        let wan = NetworkEnv::wan();
        assert_eq!(simulate_latency(&CommMeter::from_totals(0, 0), &wan), 0.0);
        assert!((simulate_latency(&CommMeter::from_totals(29, 0), &wan) - 0.232).abs() < 1e-12);
        let t = simulate_latency(&CommMeter::from_totals(29, 60_000_000), &wan);
        assert!((t - 1.432).abs() < 1e-12);
    }

    #[test]
    fn env_validation() {
        assert!(NetworkEnv::new("x", 0.0, 0.0).is_err());
        assert!(NetworkEnv::new("x", 1.0, -1.0).is_err());
        assert!(NetworkEnv::by_label("moon").is_err());
        assert_eq!(NetworkEnv::by_label("wan").unwrap(), NetworkEnv::wan());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone_in_every_input(
                rounds in 0u64..1000, bytes in 0u64..1_000_000_000,
                lat in 0.0f64..0.1, bw in 1e6f64..1e10,
                dr in 0u64..10, db in 0u64..1000, dl in 0.0f64..0.01, scale in 1.0f64..4.0,
            ) {
                let base = simulate_latency(&CommMeter::from_totals(rounds, bytes), &NetworkEnv::new("x", bw, lat).unwrap());
                let more = simulate_latency(
                    &CommMeter::from_totals(rounds + dr, bytes + db),
                    &NetworkEnv::new("x", bw / scale, lat + dl).unwrap(),
                );
                prop_assert!(more >= base);
            }
        }
    }
}
