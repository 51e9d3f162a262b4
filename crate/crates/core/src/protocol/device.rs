// SPDX-License-Identifier: Apache-2.0

//! Device-side state and per-phase actions.

use num_bigint::BigUint;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::messages::{OpeningMsg, PrepareMsg, UploadMsg};
use super::{ProtocolError, ProtocolParams, Role};
use crate::algebra::random_below;
use crate::codec::{decode, to_ring, try_from_ring, CodecError, EncodedVector, FixedPointSpec};
use crate::commitment::{commit, encode_message};
use crate::lhh::lhh_hash;
use crate::paillier::{vec_decrypt, vec_encrypt_crt, CiphertextVector, PaillierPublicKey, PaillierSecretKey};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceState {
    pub id: u32,
    pub role: Role,
    /// Exact sum of every gradient this device has uploaded.
    pub cv: EncodedVector,
    pub selected_rounds: Vec<u64>,
}

impl DeviceState {
    pub fn new(id: u32, dim: usize) -> Self {
        Self { id, role: Role::Normal, cv: EncodedVector::zeros(dim), selected_rounds: Vec::new() }
    }

    pub fn request_unlearning(&mut self) {
        self.role = Role::Unlearning;
    }

    pub fn accumulate(&mut self, v: &EncodedVector) {
        self.cv.add_assign(v);
    }

    /// The vector this device hashes and encrypts: `v` when normal, `cv`
    /// when unlearning.
    pub fn contribution<'a>(&'a self, v: Option<&'a EncodedVector>) -> Result<&'a EncodedVector, ProtocolError> {
        match self.role {
            Role::Unlearning => Ok(&self.cv),
            Role::Normal => v.ok_or(ProtocolError::MissingGradient(self.id)),
        }
    }

    /// Hashes the contribution and commits to the digest with fresh
    /// randomness; the opening stays with the device until verification.
    pub fn prepare<R: RngCore + ?Sized>(
        &self,
        params: &ProtocolParams,
        v: Option<&EncodedVector>,
        rng: &mut R,
    ) -> Result<(PrepareMsg, OpeningMsg), ProtocolError> {
        let x = self.contribution(v)?;
        let digest = lhh_hash(&params.lhh, &to_ring(x, &params.group().q_order))?;
        let r = random_below(&params.group().q_order, rng);
        let commitment = commit(&params.com, &encode_message(&params.com, &digest), &r);
        Ok((
            PrepareMsg { device_id: self.id, commitment },
            OpeningMsg { device_id: self.id, digest, randomness: r },
        ))
    }

    /// Encrypts the contribution coordinate-wise under `pk`; `sk` only
    /// speeds up the modular exponentiation.
    pub fn upload<R: RngCore + ?Sized>(
        &self,
        params: &ProtocolParams,
        sk: &PaillierSecretKey,
        v: Option<&EncodedVector>,
        rng: &mut R,
    ) -> Result<UploadMsg, ProtocolError> {
        let x = self.contribution(v)?;
        let payload = vec_encrypt_crt(&params.pk, sk, &to_ring(x, &params.pk.n), rng)?;
        Ok(UploadMsg { device_id: self.id, payload, flag: self.role.into() })
    }
}

/// Decrypts the broadcast aggregate and divides by the cohort size.
///
/// Fails with [`CodecError::SumOutOfRange`] when a coordinate lies beyond
/// anything an honest aggregate can produce.
pub fn decrypt_update(
    sk: &PaillierSecretKey,
    pk: &PaillierPublicKey,
    ct: &CiphertextVector,
    cohort_size: u64,
    spec: &FixedPointSpec,
) -> Result<(EncodedVector, Vec<f64>), ProtocolError> {
    if cohort_size == 0 {
        return Err(ProtocolError::EmptyCohort);
    }
    let residues: Vec<BigUint> = vec_decrypt(sk, pk, ct)?;
    let a = try_from_ring(&residues, &pk.n, spec).map_err(|e: CodecError| ProtocolError::Codec(e))?;
    let dw = decode(&a, cohort_size, spec);
    Ok((a, dw))
}
