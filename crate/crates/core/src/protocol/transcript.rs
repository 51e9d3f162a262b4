// SPDX-License-Identifier: Apache-2.0

//! Line-delimited JSON transcript of every protocol message.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::EncodedVector;
use crate::paillier::CiphertextVector;
use crate::protocol::messages::Flag;
use crate::protocol::verify::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Preparation,
    AggregationUnlearning,
    Verification,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Preparation, Phase::AggregationUnlearning, Phase::Verification];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Party {
    Server,
    Device(u32),
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Server => f.write_str("server"),
            Party::Device(id) => write!(f, "device:{id}"),
        }
    }
}

impl FromStr for Party {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "server" {
            return Ok(Party::Server);
        }
        s.strip_prefix("device:")
            .and_then(|id| id.parse().ok())
            .map(Party::Device)
            .ok_or_else(|| format!("unknown party {s:?}"))
    }
}

impl TryFrom<String> for Party {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Party> for String {
    fn from(p: Party) -> Self {
        p.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgKind {
    /// Device commitment to its digest.
    Prepare,
    /// Server broadcast of all commitments.
    Board,
    /// Device ciphertext vector and status flag.
    Upload,
    /// Server broadcast of the aggregate and all flags.
    Aggregate,
    /// Device opening `(digest, randomness)`.
    Opening,
    /// Server relay of all openings to one verifier.
    Openings,
    /// A verifier's local verdict; not a network message.
    Verdict,
}

impl MsgKind {
    pub fn is_message(self) -> bool {
        self != MsgKind::Verdict
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub round: u64,
    pub phase: Phase,
    pub sender: Party,
    pub receiver: Party,
    #[serde(rename = "type")]
    pub kind: MsgKind,
    pub payload_hex: String,
    pub byte_len: usize,
}

impl TranscriptRecord {
    pub fn new(round: u64, phase: Phase, sender: Party, receiver: Party, kind: MsgKind, payload: &[u8]) -> Self {
        Self {
            round,
            phase,
            sender,
            receiver,
            kind,
            payload_hex: hex::encode(payload),
            byte_len: payload.len(),
        }
    }

    pub fn payload(&self) -> Result<Vec<u8>, TranscriptError> {
        let bytes = hex::decode(&self.payload_hex).map_err(|e| TranscriptError::Malformed(e.to_string()))?;
        if bytes.len() != self.byte_len {
            return Err(TranscriptError::Malformed(format!(
                "byte_len {} but payload has {} bytes",
                self.byte_len,
                bytes.len()
            )));
        }
        Ok(bytes)
    }
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("malformed record: {0}")]
    Malformed(String),
}

/// Everything that happened in one round, in emission order.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTranscript {
    pub round: u64,
    pub records: Vec<TranscriptRecord>,
    pub aggregate: CiphertextVector,
    /// `None` when the aggregate decrypted outside the codec bound.
    pub decrypted: Option<EncodedVector>,
    pub flags: BTreeMap<u32, Flag>,
    pub verdicts: BTreeMap<u32, Verdict>,
}

pub fn write_jsonl<'a, W: Write>(
    mut w: W,
    records: impl IntoIterator<Item = &'a TranscriptRecord>,
) -> Result<(), TranscriptError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| TranscriptError::Malformed(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<TranscriptRecord>, TranscriptError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| TranscriptError::Json { line: i + 1, source })?;
        out.push(rec);
    }
    Ok(out)
}
