// SPDX-License-Identifier: Apache-2.0

//! Offline re-execution of every verification check from a transcript.
//!
//! The auditor holds the public parameters and the Paillier secret key, as a
//! device does. It reparses each recorded payload, recomputes each
//! verifier's verdict from exactly the bytes that verifier received, and
//! separately cross-checks the server's relays against the device messages.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::codec::{try_from_ring, EncodedVector};
use crate::paillier::{vec_decrypt, PaillierSecretKey};
use crate::protocol::messages::{AggregateBroadcast, Board, Flag, OpeningMsg, PrepareMsg, UploadMsg};
use crate::protocol::server::{server_aggregate_unlearn, server_board};
use crate::protocol::transcript::{MsgKind, Party, TranscriptRecord};
use crate::protocol::verify::{verify_decommitments, verify_round, Verdict};
use crate::protocol::ProtocolParams;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RoundAudit {
    pub round: u64,
    /// Inconsistencies between messages, independent of the verdicts.
    pub issues: Vec<String>,
    /// Verdicts recomputed from the transcript, per verifier.
    pub recomputed: BTreeMap<u32, Verdict>,
    /// Verdicts the verifiers recorded live.
    pub recorded: BTreeMap<u32, Verdict>,
}

impl RoundAudit {
    pub fn agrees(&self) -> bool {
        self.recomputed == self.recorded
    }

    pub fn passed(&self) -> bool {
        self.issues.is_empty() && self.agrees() && self.recomputed.values().all(Verdict::passed)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuditReport {
    pub rounds: Vec<RoundAudit>,
}

impl AuditReport {
    pub fn all_pass(&self) -> bool {
        self.rounds.iter().all(RoundAudit::passed)
    }

    pub fn agrees_with_live(&self) -> bool {
        self.rounds.iter().all(RoundAudit::agrees)
    }

    /// Rounds with message inconsistencies or verdict disagreements.
    pub fn mismatched_rounds(&self) -> Vec<u64> {
        self.rounds.iter().filter(|r| !r.issues.is_empty() || !r.agrees()).map(|r| r.round).collect()
    }

    pub fn failed_rounds(&self) -> Vec<u64> {
        self.rounds.iter().filter(|r| !r.passed()).map(|r| r.round).collect()
    }

    pub fn recomputed_verdicts(&self) -> BTreeMap<(u64, u32), Verdict> {
        self.rounds.iter().flat_map(|r| r.recomputed.iter().map(move |(id, v)| ((r.round, *id), *v))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditOptions {
    /// Decrypt every upload and check unlearners' payloads against the
    /// replayed sum of their earlier gradients.
    pub replay_cv: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self { replay_cv: true }
    }
}

#[derive(Default)]
struct RoundMsgs {
    prepares: Vec<PrepareMsg>,
    boards: BTreeMap<u32, Board>,
    uploads: Vec<UploadMsg>,
    broadcasts: BTreeMap<u32, AggregateBroadcast>,
    openings: Vec<OpeningMsg>,
    relays: BTreeMap<u32, Vec<OpeningMsg>>,
    verdicts: BTreeMap<u32, Verdict>,
}

fn device(p: Party) -> Option<u32> {
    match p {
        Party::Device(id) => Some(id),
        Party::Server => None,
    }
}

fn parse_record(params: &ProtocolParams, r: &TranscriptRecord, m: &mut RoundMsgs) -> Result<(), String> {
    let bytes = r.payload().map_err(|e| e.to_string())?;
    let err = |e: crate::protocol::ProtocolError| format!("{:?} {} -> {}: {e}", r.kind, r.sender, r.receiver);
    let (from, to) = (device(r.sender), device(r.receiver));
    match (r.kind, from, to) {
        (MsgKind::Prepare, Some(id), None) => m.prepares.push(params.decode_prepare(id, &bytes).map_err(err)?),
        (MsgKind::Board, None, Some(id)) => {
            m.boards.insert(id, params.decode_board(&bytes).map_err(err)?);
        }
        (MsgKind::Upload, Some(id), None) => m.uploads.push(params.decode_upload(id, &bytes).map_err(err)?),
        (MsgKind::Aggregate, None, Some(id)) => {
            m.broadcasts.insert(id, params.decode_aggregate(&bytes).map_err(err)?);
        }
        (MsgKind::Opening, Some(id), None) => m.openings.push(params.decode_opening(id, &bytes).map_err(err)?),
        (MsgKind::Openings, None, Some(id)) => {
            m.relays.insert(id, params.decode_openings(&bytes).map_err(err)?);
        }
        (MsgKind::Verdict, Some(a), Some(b)) if a == b => {
            m.verdicts.insert(a, params.decode_verdict(&bytes).map_err(err)?);
        }
        _ => return Err(format!("unexpected {:?} record from {} to {}", r.kind, r.sender, r.receiver)),
    }
    Ok(())
}

fn all_equal<T: PartialEq>(m: &BTreeMap<u32, T>) -> Option<&T> {
    let mut it = m.values();
    let first = it.next()?;
    it.all(|x| x == first).then_some(first)
}

pub fn audit_transcript(
    records: &[TranscriptRecord],
    params: &ProtocolParams,
    sk: &PaillierSecretKey,
    opts: AuditOptions,
) -> AuditReport {
    let mut by_round: BTreeMap<u64, Vec<&TranscriptRecord>> = BTreeMap::new();
    for r in records {
        by_round.entry(r.round).or_default().push(r);
    }
    let mut cv: BTreeMap<u32, EncodedVector> = BTreeMap::new();
    let mut report = AuditReport::default();
    for (round, recs) in by_round {
        let mut audit = RoundAudit { round, ..Default::default() };
        let mut m = RoundMsgs::default();
        for r in recs {
            if let Err(e) = parse_record(params, r, &mut m) {
                audit.issues.push(e);
            }
        }
        audit.recorded = m.verdicts.clone();
        check_round(params, sk, &m, &mut audit, opts.replay_cv.then_some(&mut cv));
        report.rounds.push(audit);
    }
    report
}

fn check_round(
    params: &ProtocolParams,
    sk: &PaillierSecretKey,
    m: &RoundMsgs,
    audit: &mut RoundAudit,
    cv: Option<&mut BTreeMap<u32, EncodedVector>>,
) {
    let issues = &mut audit.issues;
    let cohort: Vec<u32> = m.prepares.iter().map(|p| p.device_id).collect();

    // Preparation: the board every device saw must be the prepared one.
    match server_board(&m.prepares, &cohort) {
        Ok(board) => {
            for (id, b) in &m.boards {
                if *b != board {
                    issues.push(format!("board sent to device {id} differs from the prepared commitments"));
                }
            }
        }
        Err(e) => issues.push(format!("prepares: {e}")),
    }
    if m.boards.len() != cohort.len() {
        issues.push(format!("{} boards for a cohort of {}", m.boards.len(), cohort.len()));
    }
    if all_equal(&m.boards).is_none() && !m.boards.is_empty() {
        issues.push("devices received different boards".into());
    }

    // Aggregation: recompute the honest aggregate from the uploads.
    let flags: BTreeMap<u32, Flag> = m.uploads.iter().map(|u| (u.device_id, u.flag)).collect();
    match server_aggregate_unlearn(&params.pk, &m.uploads) {
        Ok(agg) => {
            for (id, b) in &m.broadcasts {
                if b.aggregate != agg {
                    issues.push(format!("aggregate sent to device {id} does not match the uploads"));
                }
                if b.flags != flags {
                    issues.push(format!("flags sent to device {id} do not match the uploads"));
                }
            }
        }
        Err(e) => issues.push(format!("uploads: {e}")),
    }
    if all_equal(&m.broadcasts).is_none() && !m.broadcasts.is_empty() {
        issues.push("devices received different aggregates".into());
    }

    // Unlearners' encrypted cv against the replayed history.
    if let Some(cv) = cv {
        for u in &m.uploads {
            let plain = match vec_decrypt(sk, &params.pk, &u.payload)
                .map_err(|e| e.to_string())
                .and_then(|r| try_from_ring(&r, &params.pk.n, &params.codec).map_err(|e| e.to_string()))
            {
                Ok(p) => p,
                Err(e) => {
                    issues.push(format!("upload from device {}: {e}", u.device_id));
                    continue;
                }
            };
            let entry = cv.entry(u.device_id).or_insert_with(|| EncodedVector::zeros(params.dim()));
            match u.flag {
                Flag::Normal => entry.add_assign(&plain),
                Flag::Unlearning => {
                    if *entry != plain {
                        issues.push(format!("device {} unlearned a vector other than its contribution sum", u.device_id));
                    }
                }
            }
        }
    }

    // Verification: relays must carry the device openings unchanged.
    let mut sent: Vec<OpeningMsg> = m.openings.clone();
    sent.sort_by_key(|o| o.device_id);
    if !m.openings.is_empty() {
        if let Ok(board) = server_board(&m.prepares, &cohort) {
            match verify_decommitments(&params.com, &board, &sent) {
                Ok(ok) => {
                    for (id, good) in ok {
                        if !good {
                            issues.push(format!("device {id}'s own opening does not match its commitment"));
                        }
                    }
                }
                Err(e) => issues.push(format!("openings: {e}")),
            }
        }
    }
    for (id, relayed) in &m.relays {
        let mut r = relayed.clone();
        r.sort_by_key(|o| o.device_id);
        if r != sent {
            issues.push(format!("openings relayed to device {id} differ from those the devices sent"));
        }
    }

    // Each verifier's verdict from the bytes it received.
    for (id, relayed) in &m.relays {
        let (Some(board), Some(bc)) = (m.boards.get(id), m.broadcasts.get(id)) else {
            issues.push(format!("verifier {id} lacks a board or aggregate"));
            continue;
        };
        let a = vec_decrypt(sk, &params.pk, &bc.aggregate)
            .ok()
            .and_then(|r| try_from_ring(&r, &params.pk.n, &params.codec).ok());
        match verify_round(params, board, relayed, bc, a.as_ref(), *id) {
            Ok(v) => {
                audit.recomputed.insert(*id, v);
            }
            Err(e) => issues.push(format!("verifier {id}: {e}")),
        }
    }
}
