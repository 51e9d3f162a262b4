// SPDX-License-Identifier: Apache-2.0

//! Server-side state and the honest aggregation rule.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use num_traits::One;

use super::messages::{Board, Flag, PrepareMsg, UploadMsg};
use super::ProtocolError;
use crate::adversary::ServerBehavior;
use crate::codec::{decode, EncodedVector, FixedPointSpec};
use crate::paillier::{ct_add, ct_sub, Ciphertext, CiphertextVector, PaillierPublicKey};

/// The public global model, held as a real base plus the exact integer sum
/// of every applied aggregate. All rounds share the divisor `|U|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub base: Vec<f64>,
    pub acc: EncodedVector,
    pub divisor: u64,
}

impl ModelState {
    pub fn new(base: Vec<f64>, divisor: u64) -> Self {
        let dim = base.len();
        Self { base, acc: EncodedVector::zeros(dim), divisor }
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn apply(&mut self, a: &EncodedVector) -> Result<(), ProtocolError> {
        if a.len() != self.dim() {
            return Err(ProtocolError::LengthMismatch(a.len(), self.dim()));
        }
        self.acc.add_assign(a);
        Ok(())
    }

    pub fn weights(&self, spec: &FixedPointSpec) -> Vec<f64> {
        self.base.iter().zip(decode(&self.acc, self.divisor, spec)).map(|(b, d)| b + d).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub round: u64,
    pub board: Board,
    pub uploads: BTreeMap<u32, UploadMsg>,
    pub behavior: ServerBehavior,
}

impl ServerState {
    pub fn new(behavior: ServerBehavior) -> Self {
        Self { round: 0, board: Board::default(), uploads: BTreeMap::new(), behavior }
    }

    pub fn begin_round(&mut self, round: u64) {
        self.round = round;
        self.board = Board::default();
        self.uploads.clear();
    }

    pub fn flags(&self) -> BTreeMap<u32, Flag> {
        self.uploads.iter().map(|(id, u)| (*id, u.flag)).collect()
    }
}

/// Collects one commitment per cohort member.
pub fn server_board(msgs: &[PrepareMsg], cohort: &[u32]) -> Result<Board, ProtocolError> {
    let mut board = BTreeMap::new();
    for m in msgs {
        if board.insert(m.device_id, m.commitment.clone()).is_some() {
            return Err(ProtocolError::DuplicateDevice(m.device_id));
        }
    }
    let expected: BTreeSet<u32> = cohort.iter().copied().collect();
    if let Some(id) = expected.iter().find(|id| !board.contains_key(id)) {
        return Err(ProtocolError::MissingDevice(*id));
    }
    if let Some(id) = board.keys().find(|id| !expected.contains(id)) {
        return Err(ProtocolError::InvalidPlan(format!("device {id} is not in the cohort")));
    }
    Ok(Board(board))
}

/// `[[a]] = (+)_{f=+1} x_i (-)_{f=-1} x_j`, folded in device-id order.
pub fn server_aggregate_unlearn(pk: &PaillierPublicKey, uploads: &[UploadMsg]) -> Result<CiphertextVector, ProtocolError> {
    let dim = uploads.first().ok_or(ProtocolError::EmptyCohort)?.payload.len();
    let mut sorted: Vec<&UploadMsg> = uploads.iter().collect();
    sorted.sort_by_key(|u| u.device_id);
    let mut acc = vec![Ciphertext(BigUint::one()); dim];
    for u in sorted {
        if u.payload.len() != dim {
            return Err(ProtocolError::LengthMismatch(u.payload.len(), dim));
        }
        for (a, x) in acc.iter_mut().zip(&u.payload.coords) {
            *a = match u.flag {
                Flag::Normal => ct_add(pk, a, x),
                Flag::Unlearning => ct_sub(pk, a, x)?,
            };
        }
    }
    Ok(CiphertextVector { coords: acc })
}

/// `w_t = w_{t-1} + dw`.
pub fn apply_update(w: &[f64], dw: &[f64]) -> Result<Vec<f64>, ProtocolError> {
    if w.len() != dw.len() {
        return Err(ProtocolError::LengthMismatch(w.len(), dw.len()));
    }
    Ok(w.iter().zip(dw).map(|(a, b)| a + b).collect())
}

/// Plaintext reference for the proportional-rescaling variant:
/// `|U| / (|U| - k) * dw - 1 / (|U| - k) * sum_unl v` with `k` unlearners.
pub fn rescaled_update_reference(
    dw: &[f64],
    unlearner_gradients: &[Vec<f64>],
    cohort_size: usize,
) -> Result<Vec<f64>, ProtocolError> {
    let k = unlearner_gradients.len();
    if k >= cohort_size {
        return Err(ProtocolError::DivisionByZero);
    }
    let remaining = (cohort_size - k) as f64;
    let mut out: Vec<f64> = dw.iter().map(|x| cohort_size as f64 / remaining * x).collect();
    for v in unlearner_gradients {
        if v.len() != dw.len() {
            return Err(ProtocolError::LengthMismatch(v.len(), dw.len()));
        }
        for (o, x) in out.iter_mut().zip(v) {
            *o -= x / remaining;
        }
    }
    Ok(out)
}
