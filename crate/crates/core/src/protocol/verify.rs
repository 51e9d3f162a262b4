// SPDX-License-Identifier: Apache-2.0

//! Checks an unlearning device runs before it exits.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::messages::{AggregateBroadcast, Board, Flag, OpeningMsg};
use super::{ProtocolError, ProtocolParams};
use crate::codec::{to_ring, EncodedVector};
use crate::commitment::{decommit, encode_message, ComParams};
use crate::lhh::{lhh_eval, lhh_hash, LhhDigest, LhhError, LhhParams};

/// One verifier's outcome: openings match the board, and the decrypted
/// aggregate hashes to the flag-weighted digest combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub decommit_ok: bool,
    pub unlearning_ok: bool,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.decommit_ok && self.unlearning_ok
    }
}

/// Per-device `decommit(board[i], encode(h_i), r_i)`.
pub fn verify_decommitments(
    com: &ComParams,
    board: &Board,
    openings: &[OpeningMsg],
) -> Result<BTreeMap<u32, bool>, ProtocolError> {
    let by_id: BTreeMap<u32, &OpeningMsg> = openings.iter().map(|o| (o.device_id, o)).collect();
    board
        .0
        .iter()
        .map(|(id, c)| {
            let o = by_id.get(id).ok_or(ProtocolError::MissingOpening(*id))?;
            Ok((*id, decommit(com, c, &encode_message(com, &o.digest), &o.randomness)))
        })
        .collect()
}

/// `H = prod_i h_i^{f_i}`.
pub fn combine_hashes(
    params: &ProtocolParams,
    openings: &[OpeningMsg],
    flags: &BTreeMap<u32, Flag>,
) -> Result<LhhDigest, ProtocolError> {
    if openings.len() != flags.len() {
        return Err(ProtocolError::LengthMismatch(openings.len(), flags.len()));
    }
    let mut digests = Vec::with_capacity(openings.len());
    let mut coeffs = Vec::with_capacity(openings.len());
    for o in openings {
        let f = flags.get(&o.device_id).ok_or(ProtocolError::MissingDevice(o.device_id))?;
        digests.push(o.digest.clone());
        coeffs.push(f.coefficient());
    }
    Ok(lhh_eval(params.group(), &digests, &coeffs)?)
}

/// `lhh_hash(a mod q) == H`.
pub fn verify_unlearning(lhh: &LhhParams, a: &EncodedVector, h: &LhhDigest) -> Result<bool, LhhError> {
    Ok(lhh_hash(lhh, &to_ring(a, &lhh.group.q_order))? == *h)
}

/// Full check by verifier `me`. `a` is `None` when the decrypted aggregate
/// fell outside the codec's sum bound, which no honest round produces.
///
/// Structural faults (openings or flags not covering the board, or `me` not
/// flagged as unlearning) fail the verdict instead of raising an error.
pub fn verify_round(
    params: &ProtocolParams,
    board: &Board,
    openings: &[OpeningMsg],
    broadcast: &AggregateBroadcast,
    a: Option<&EncodedVector>,
    me: u32,
) -> Result<Verdict, ProtocolError> {
    let board_ids: BTreeSet<u32> = board.0.keys().copied().collect();
    let opening_ids: BTreeSet<u32> = openings.iter().map(|o| o.device_id).collect();
    let flag_ids: BTreeSet<u32> = broadcast.flags.keys().copied().collect();

    let covered = opening_ids == board_ids && openings.len() == board_ids.len();
    let decommit_ok = covered && verify_decommitments(&params.com, board, openings)?.values().all(|&ok| ok);

    let flags_ok = flag_ids == board_ids && broadcast.flags.get(&me) == Some(&Flag::Unlearning);
    let unlearning_ok = match a {
        Some(a) if covered && flags_ok && a.len() == params.dim() => {
            let h = combine_hashes(params, openings, &broadcast.flags)?;
            verify_unlearning(&params.lhh, a, &h)?
        }
        _ => false,
    };
    Ok(Verdict { decommit_ok, unlearning_ok })
}
