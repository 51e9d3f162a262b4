// SPDX-License-Identifier: Apache-2.0

//! Per-round, per-phase, per-party byte and time accounting.
//!
//! Byte counts come from the fixed-width wire encodings. Broadcasts are
//! counted once per logical recipient. Every message travels between a
//! device and the server, so per phase the bytes devices send equal the
//! bytes the server receives and vice versa.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Duration;

use serde::Serialize;

use crate::protocol::transcript::{Party, Phase, TranscriptRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PartyTotals {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub cpu_time: Duration,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MetricsLedger {
    entries: BTreeMap<(u64, Phase, Party), PartyTotals>,
}

/// One CSV line of the raw ledger.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub unlearn_rate: f64,
    pub round: u64,
    pub phase: Phase,
    pub role: Party,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub cpu_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Device,
    Server,
}

/// Per-phase overhead for one role.
///
/// `total_bytes` is the largest number of bytes a single party of that role
/// transmitted in the phase during any one round; `total_time_ms` sums CPU
/// time over the whole campaign.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub unlearn_rate: f64,
    pub role: Role,
    pub phase: Phase,
    pub total_bytes: u64,
    pub total_time_ms: f64,
}

impl MetricsLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, round: u64, phase: Phase, sender: Party, receiver: Party, byte_len: usize) {
        self.entries.entry((round, phase, sender)).or_default().bytes_sent += byte_len as u64;
        self.entries.entry((round, phase, receiver)).or_default().bytes_received += byte_len as u64;
    }

    pub fn add_time(&mut self, round: u64, phase: Phase, party: Party, elapsed: Duration) {
        self.entries.entry((round, phase, party)).or_default().cpu_time += elapsed;
    }

    pub fn merge(&mut self, other: &MetricsLedger) {
        for (k, v) in &other.entries {
            let e = self.entries.entry(*k).or_default();
            e.bytes_sent += v.bytes_sent;
            e.bytes_received += v.bytes_received;
            e.cpu_time += v.cpu_time;
        }
    }

    /// Rebuilds byte counts from transcript records; verdict records are
    /// local and never counted.
    pub fn from_transcript<'a>(records: impl IntoIterator<Item = &'a TranscriptRecord>) -> Self {
        let mut ledger = Self::new();
        for r in records {
            if r.kind.is_message() {
                ledger.record(r.round, r.phase, r.sender, r.receiver, r.byte_len);
            }
        }
        ledger
    }

    pub fn get(&self, round: u64, phase: Phase, party: Party) -> PartyTotals {
        self.entries.get(&(round, phase, party)).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(u64, Phase, Party), &PartyTotals)> {
        self.entries.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Byte totals only, dropping timing; equal ledgers from identical runs
    /// compare equal under this projection.
    pub fn byte_totals(&self) -> BTreeMap<(u64, Phase, Party), (u64, u64)> {
        self.entries
            .iter()
            .filter(|(_, v)| v.bytes_sent > 0 || v.bytes_received > 0)
            .map(|(k, v)| (*k, (v.bytes_sent, v.bytes_received)))
            .collect()
    }

    /// `(sum of device bytes sent, server bytes received)` for one phase.
    pub fn conservation(&self, phase: Phase) -> ((u64, u64), (u64, u64)) {
        let mut dev = (0, 0);
        let mut srv = (0, 0);
        for ((_, ph, party), t) in &self.entries {
            if *ph != phase {
                continue;
            }
            match party {
                Party::Server => {
                    srv.0 += t.bytes_sent;
                    srv.1 += t.bytes_received;
                }
                Party::Device(_) => {
                    dev.0 += t.bytes_sent;
                    dev.1 += t.bytes_received;
                }
            }
        }
        // ((device sent, server received), (server sent, device received))
        ((dev.0, srv.1), (srv.0, dev.1))
    }

    /// Largest per-round bytes sent by one device in `phase`.
    pub fn max_device_sent(&self, phase: Phase) -> u64 {
        self.entries
            .iter()
            .filter(|((_, ph, p), _)| *ph == phase && matches!(p, Party::Device(_)))
            .map(|(_, t)| t.bytes_sent)
            .max()
            .unwrap_or(0)
    }

    pub fn rows(&self, unlearn_rate: f64) -> Vec<MetricsRow> {
        self.entries
            .iter()
            .map(|((round, phase, party), t)| MetricsRow {
                unlearn_rate,
                round: *round,
                phase: *phase,
                role: *party,
                bytes_sent: t.bytes_sent,
                bytes_received: t.bytes_received,
                cpu_ms: t.cpu_time.as_secs_f64() * 1e3,
            })
            .collect()
    }

    /// One row per (role, phase), all six always present.
    pub fn summarize(&self, unlearn_rate: f64) -> Vec<SummaryRow> {
        let mut out = Vec::with_capacity(6);
        for role in [Role::Device, Role::Server] {
            for phase in Phase::ALL {
                let mut max_bytes = 0;
                let mut time = Duration::ZERO;
                for ((_, ph, party), t) in &self.entries {
                    let matches_role = match party {
                        Party::Server => role == Role::Server,
                        Party::Device(_) => role == Role::Device,
                    };
                    if *ph == phase && matches_role {
                        max_bytes = max_bytes.max(t.bytes_sent);
                        time += t.cpu_time;
                    }
                }
                out.push(SummaryRow {
                    unlearn_rate,
                    role,
                    phase,
                    total_bytes: max_bytes,
                    total_time_ms: time.as_secs_f64() * 1e3,
                });
            }
        }
        out
    }
}

pub fn write_csv<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_ledger_summarizes_to_zeros() {
        let l = MetricsLedger::new();
        let rows = l.summarize(0.0);
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.total_bytes == 0));
    }

    #[test]
    fn single_message_is_booked_on_both_ends() {
        let mut l = MetricsLedger::new();
        l.record(1, Phase::Preparation, Party::Device(3), Party::Server, 64);
        assert_eq!(l.get(1, Phase::Preparation, Party::Device(3)).bytes_sent, 64);
        assert_eq!(l.get(1, Phase::Preparation, Party::Server).bytes_received, 64);
        assert_eq!(l.get(1, Phase::Preparation, Party::Server).bytes_sent, 0);
        let ((ds, sr), (ss, dr)) = l.conservation(Phase::Preparation);
        assert_eq!((ds, sr, ss, dr), (64, 64, 0, 0));
    }

    #[test]
    fn csv_header_matches_columns() {
        let mut l = MetricsLedger::new();
        l.record(2, Phase::Verification, Party::Server, Party::Device(1), 10);
        let mut buf = Vec::new();
        write_csv(&mut buf, &l.rows(0.1)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, "unlearn_rate,round,phase,role,bytes_sent,bytes_received,cpu_ms");
        assert!(text.contains("0.1,2,verification,server,10,0,0"));
        assert!(text.contains("0.1,2,verification,device:1,0,10,0"));
    }
}
