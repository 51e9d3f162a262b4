// SPDX-License-Identifier: Apache-2.0

//! Single-round orchestration over the shared world state.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand_chacha::ChaCha20Rng;

use super::device::{decrypt_update, DeviceState};
use super::messages::{AggregateBroadcast, OpeningMsg, UploadMsg};
use super::server::{server_aggregate_unlearn, server_board, ModelState, ServerState};
use super::transcript::{MsgKind, Party, Phase, RoundTranscript, TranscriptRecord};
use super::verify::{verify_round, Verdict};
use super::{ProtocolError, Role, Setup};
use crate::adversary::{corrupt_aggregate, corrupt_openings, ServerBehavior};
use crate::algebra::seeded_rng;
use crate::codec::{encode, CodecError, EncodedVector};
use crate::metrics::MetricsLedger;

/// Who takes part in one round and who asks to be forgotten.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundPlan {
    pub round: u64,
    pub cohort: Vec<u32>,
    pub unlearners: Vec<u32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineOptions {
    /// Abort with [`ProtocolError::VerificationFailed`] on any failed verdict.
    pub strict: bool,
}

/// Every party's state plus the shared key material.
#[derive(Debug, Clone)]
pub struct World {
    pub setup: Setup,
    pub seed: Vec<u8>,
    pub devices: BTreeMap<u32, DeviceState>,
    pub model: ModelState,
    pub server: ServerState,
    /// Exited device id and the round its verification passed.
    pub exited: BTreeMap<u32, u64>,
    pub ledger: MetricsLedger,
}

impl World {
    /// Devices `0..n_devices`, model starting at `base`, fixed cohort size.
    pub fn new(setup: Setup, seed: &[u8], n_devices: u32, base: Vec<f64>, cohort_size: u64, behavior: ServerBehavior) -> Self {
        let dim = setup.params.dim();
        assert_eq!(base.len(), dim, "base model dimension");
        Self {
            devices: (0..n_devices).map(|id| (id, DeviceState::new(id, dim))).collect(),
            model: ModelState::new(base, cohort_size),
            server: ServerState::new(behavior),
            exited: BTreeMap::new(),
            ledger: MetricsLedger::new(),
            seed: seed.to_vec(),
            setup,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.model.weights(&self.setup.params.codec)
    }

    pub fn is_active(&self, id: u32) -> bool {
        self.devices.contains_key(&id) && !self.exited.contains_key(&id)
    }

    fn device_rng(&self, round: u64, id: u32, purpose: &[u8]) -> ChaCha20Rng {
        seeded_rng(&[b"device", &self.seed, &round.to_be_bytes(), &id.to_be_bytes(), purpose])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    pub round: u64,
    pub model: Vec<f64>,
    /// The applied update; zero when the aggregate was rejected.
    pub delta_w: Vec<f64>,
    /// Decrypted aggregate, `None` if it lay outside the codec bound.
    pub a: Option<EncodedVector>,
    pub verdicts: BTreeMap<u32, Verdict>,
    pub exited: Vec<u32>,
    /// The behavior the server actually applied this round, if any.
    pub tampering: Option<ServerBehavior>,
}

impl RoundResult {
    pub fn all_verified(&self) -> bool {
        self.verdicts.values().all(Verdict::passed)
    }

    pub fn failed(&self) -> Vec<u32> {
        self.verdicts.iter().filter(|(_, v)| !v.passed()).map(|(id, _)| *id).collect()
    }
}

struct Log<'a> {
    round: u64,
    records: Vec<TranscriptRecord>,
    ledger: &'a mut MetricsLedger,
}

impl Log<'_> {
    fn send(&mut self, phase: Phase, sender: Party, receiver: Party, kind: MsgKind, payload: &[u8]) {
        self.ledger.record(self.round, phase, sender, receiver, payload.len());
        self.records.push(TranscriptRecord::new(self.round, phase, sender, receiver, kind, payload));
    }

    fn note(&mut self, phase: Phase, party: Party, kind: MsgKind, payload: &[u8]) {
        self.records.push(TranscriptRecord::new(self.round, phase, party, party, kind, payload));
    }

    fn time(&mut self, phase: Phase, party: Party, elapsed: Duration) {
        self.ledger.add_time(self.round, phase, party, elapsed);
    }
}

fn check_plan(world: &World, plan: &RoundPlan) -> Result<(), ProtocolError> {
    if plan.cohort.is_empty() {
        return Err(ProtocolError::EmptyCohort);
    }
    let cohort: BTreeSet<u32> = plan.cohort.iter().copied().collect();
    if cohort.len() != plan.cohort.len() {
        let dup = plan.cohort.iter().find(|id| plan.cohort.iter().filter(|x| x == id).count() > 1).unwrap();
        return Err(ProtocolError::DuplicateDevice(*dup));
    }
    if cohort.len() as u64 != world.model.divisor {
        return Err(ProtocolError::InvalidPlan(format!(
            "cohort of {} but the model divisor is {}",
            cohort.len(),
            world.model.divisor
        )));
    }
    for id in &cohort {
        if !world.devices.contains_key(id) {
            return Err(ProtocolError::MissingDevice(*id));
        }
        if world.exited.contains_key(id) {
            return Err(ProtocolError::InvalidPlan(format!("device {id} has already exited")));
        }
    }
    let unl: BTreeSet<u32> = plan.unlearners.iter().copied().collect();
    if let Some(id) = unl.iter().find(|id| !cohort.contains(id)) {
        return Err(ProtocolError::InvalidPlan(format!("unlearner {id} is not in the cohort")));
    }
    if let Some(id) = cohort.iter().find(|id| !unl.contains(id) && world.devices[id].role == Role::Unlearning) {
        return Err(ProtocolError::InvalidPlan(format!("device {id} is unlearning but not listed as such")));
    }
    Ok(())
}

/// Runs preparation, aggregation with unlearning, and, when the cohort has
/// unlearners, verification. `gradients` must hold a real-valued update for
/// every normal cohort member.
pub fn run_round(
    world: &mut World,
    plan: &RoundPlan,
    gradients: &BTreeMap<u32, Vec<f64>>,
    opts: &EngineOptions,
) -> Result<(RoundResult, RoundTranscript), ProtocolError> {
    check_plan(world, plan)?;
    let round = plan.round;
    let mut cohort = plan.cohort.clone();
    cohort.sort_unstable();
    let mut unlearners = plan.unlearners.clone();
    unlearners.sort_unstable();
    unlearners.dedup();
    for id in &unlearners {
        world.devices.get_mut(id).expect("checked").request_unlearning();
    }
    world.server.begin_round(round);
    let params = world.setup.params.clone();
    let sk = world.setup.sk.clone();
    let tampering = world.server.behavior.resolve(&cohort, &unlearners, params.dim())?;

    let mut encoded: BTreeMap<u32, EncodedVector> = BTreeMap::new();
    for id in &cohort {
        if world.devices[id].role == Role::Normal {
            let v = gradients.get(id).ok_or(ProtocolError::MissingGradient(*id))?;
            if v.len() != params.dim() {
                return Err(ProtocolError::LengthMismatch(v.len(), params.dim()));
            }
            encoded.insert(*id, encode(v, &params.codec)?);
        }
    }

    let mut ledger = MetricsLedger::new();
    let mut log = Log { round, records: Vec::new(), ledger: &mut ledger };

    // Preparation.
    let phase = Phase::Preparation;
    let mut prepares = Vec::with_capacity(cohort.len());
    let mut openings: BTreeMap<u32, OpeningMsg> = BTreeMap::new();
    for id in &cohort {
        let t = Instant::now();
        let dev = &world.devices[id];
        let (msg, opening) = dev.prepare(&params, encoded.get(id), &mut world.device_rng(round, *id, b"commit"))?;
        let bytes = params.encode_prepare(&msg);
        log.time(phase, Party::Device(*id), t.elapsed());
        log.send(phase, Party::Device(*id), Party::Server, MsgKind::Prepare, &bytes);
        prepares.push(msg);
        openings.insert(*id, opening);
    }
    let t = Instant::now();
    let board = server_board(&prepares, &cohort)?;
    let board_bytes = params.encode_board(&board);
    world.server.board = board.clone();
    log.time(phase, Party::Server, t.elapsed());
    for id in &cohort {
        log.send(phase, Party::Server, Party::Device(*id), MsgKind::Board, &board_bytes);
    }

    // Aggregation and unlearning.
    let phase = Phase::AggregationUnlearning;
    let mut uploads: Vec<UploadMsg> = Vec::with_capacity(cohort.len());
    for id in &cohort {
        let t = Instant::now();
        let dev = &world.devices[id];
        let up = dev.upload(&params, &sk, encoded.get(id), &mut world.device_rng(round, *id, b"encrypt"))?;
        let bytes = params.encode_upload(&up);
        log.time(phase, Party::Device(*id), t.elapsed());
        log.send(phase, Party::Device(*id), Party::Server, MsgKind::Upload, &bytes);
        world.server.uploads.insert(*id, up.clone());
        uploads.push(up);
    }
    let t = Instant::now();
    let aggregate = match &tampering {
        Some(b) => corrupt_aggregate(b, &uploads, &params.pk)?,
        None => server_aggregate_unlearn(&params.pk, &uploads)?,
    };
    let broadcast = AggregateBroadcast { aggregate, flags: world.server.flags() };
    let agg_bytes = params.encode_aggregate(&broadcast);
    log.time(phase, Party::Server, t.elapsed());
    for id in &cohort {
        log.send(phase, Party::Server, Party::Device(*id), MsgKind::Aggregate, &agg_bytes);
    }
    // Decryption is deterministic, so one evaluation stands in for every
    // device; each device is charged its cost.
    let t = Instant::now();
    let decrypted = match decrypt_update(&sk, &params.pk, &broadcast.aggregate, cohort.len() as u64, &params.codec) {
        Ok((a, dw)) => Some((a, dw)),
        Err(ProtocolError::Codec(CodecError::SumOutOfRange { .. })) => None,
        Err(e) => return Err(e),
    };
    let decrypt_time = t.elapsed();
    for id in &cohort {
        log.time(phase, Party::Device(*id), decrypt_time);
        let dev = world.devices.get_mut(id).expect("checked");
        dev.selected_rounds.push(round);
        if let Some(v) = encoded.get(id) {
            dev.accumulate(v);
        }
    }
    let (a, delta_w) = match decrypted {
        Some((a, dw)) => {
            world.model.apply(&a)?;
            (Some(a), dw)
        }
        None => (None, vec![0.0; params.dim()]),
    };

    // Verification.
    let phase = Phase::Verification;
    let mut verdicts = BTreeMap::new();
    let mut exited = Vec::new();
    if !unlearners.is_empty() {
        for id in &cohort {
            let t = Instant::now();
            let bytes = params.encode_opening(&openings[id]);
            log.time(phase, Party::Device(*id), t.elapsed());
            log.send(phase, Party::Device(*id), Party::Server, MsgKind::Opening, &bytes);
        }
        let t = Instant::now();
        let collected: Vec<OpeningMsg> = openings.values().cloned().collect();
        let (relayed, relayed_board) = match &tampering {
            Some(b) => {
                let td = if b.needs_trapdoor() { world.setup.trapdoor.as_ref() } else { None };
                let mut rng = seeded_rng(&[b"adversary", &world.seed, &round.to_be_bytes()]);
                corrupt_openings(b, &params, collected, board.clone(), td, &mut rng)?
            }
            None => (collected, board.clone()),
        };
        let relay_bytes = params.encode_openings(&relayed);
        log.time(phase, Party::Server, t.elapsed());
        for id in &unlearners {
            log.send(phase, Party::Server, Party::Device(*id), MsgKind::Openings, &relay_bytes);
            let t = Instant::now();
            let verdict = verify_round(&params, &relayed_board, &relayed, &broadcast, a.as_ref(), *id)?;
            log.time(phase, Party::Device(*id), t.elapsed());
            log.note(phase, Party::Device(*id), MsgKind::Verdict, &params.encode_verdict(&verdict));
            if verdict.passed() {
                world.exited.insert(*id, round);
                exited.push(*id);
            }
            verdicts.insert(*id, verdict);
        }
    }

    let records = log.records;
    world.ledger.merge(&ledger);
    let failed: Vec<u32> = verdicts.iter().filter(|(_, v)| !v.passed()).map(|(id, _)| *id).collect();
    let result = RoundResult {
        round,
        model: world.weights(),
        delta_w,
        a: a.clone(),
        verdicts: verdicts.clone(),
        exited,
        tampering,
    };
    let transcript = RoundTranscript {
        round,
        records,
        aggregate: broadcast.aggregate,
        decrypted: a,
        flags: broadcast.flags,
        verdicts,
    };
    if opts.strict && !failed.is_empty() {
        return Err(ProtocolError::VerificationFailed { round, devices: failed });
    }
    Ok((result, transcript))
}
