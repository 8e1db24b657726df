use std::collections::BTreeMap;

use serde::Serialize;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OpCount {
    pub rounds: u64,
    pub bytes: u64,
}

/// Communication counters for one party (or, after [`CommMeter::combine`], both).
///
/// A round is one synchronized exchange: every party sends one frame and
/// receives one frame. `bytes_sent` counts payload bytes only, never framing.
/// One-way online messages (input and output delivery) add bytes but no round.
/// Offline traffic (weight-share distribution) is tallied separately.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CommMeter {
    rounds: u64,
    bytes_sent: u64,
    offline_bytes: u64,
    breakdown: BTreeMap<String, OpCount>,
}

impl CommMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn offline_bytes(&self) -> u64 {
        self.offline_bytes
    }

    /// Per-operation counters keyed by `scope/.../op`.
    pub fn breakdown(&self) -> &BTreeMap<String, OpCount> {
        &self.breakdown
    }

    pub(crate) fn record_round(&mut self, key: String, bytes: u64) {
        self.rounds += 1;
        self.bytes_sent += bytes;
        let e = self.breakdown.entry(key).or_default();
        e.rounds += 1;
        e.bytes += bytes;
    }

    pub(crate) fn record_send(&mut self, key: String, bytes: u64) {
        self.bytes_sent += bytes;
        self.breakdown.entry(key).or_default().bytes += bytes;
    }

    pub(crate) fn record_offline(&mut self, bytes: u64) {
        self.offline_bytes += bytes;
    }

    /// Rounds whose breakdown key contains every one of `parts` as a path segment.
    pub fn rounds_matching(&self, parts: &[&str]) -> u64 {
        self.breakdown
            .iter()
            .filter(|(k, _)| parts.iter().all(|p| k.split('/').any(|seg| seg == *p)))
            .map(|(_, c)| c.rounds)
            .sum()
    }

    /// Both parties' view as one meter: rounds are shared (taken as the max),
    /// bytes are summed over both directions.
    pub fn combine(a: &CommMeter, b: &CommMeter) -> CommMeter {
        let mut breakdown = a.breakdown.clone();
        for (k, c) in &b.breakdown {
            let e = breakdown.entry(k.clone()).or_default();
            e.rounds = e.rounds.max(c.rounds);
            e.bytes += c.bytes;
        }
        CommMeter {
            rounds: a.rounds.max(b.rounds),
            bytes_sent: a.bytes_sent + b.bytes_sent,
            offline_bytes: a.offline_bytes + b.offline_bytes,
            breakdown,
        }
    }

    /// Builds a meter from totals alone, e.g. for cost-model what-if queries.
    pub fn from_totals(rounds: u64, bytes_sent: u64) -> CommMeter {
        CommMeter {
            rounds,
            bytes_sent,
            ..Default::default()
        }
    }
}
