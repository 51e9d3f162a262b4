// SPDX-License-Identifier: Apache-2.0

//! The three-phase round: preparation (hash and commit), aggregation with
//! unlearning (encrypted uploads combined under status flags), and
//! verification (openings checked and the hash combination compared against
//! the decrypted aggregate).

pub mod device;
pub mod engine;
pub mod messages;
pub mod server;
pub mod transcript;
pub mod verify;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::AdversaryError;
use crate::algebra::{seeded_rng, AlgebraError, GroupDesc};
use crate::codec::{CodecError, FixedPointSpec};
use crate::commitment::{ComParams, CommitmentError, Trapdoor};
use crate::lhh::{LhhError, LhhParams};
use crate::paillier::{self, PaillierError, PaillierPublicKey, PaillierSecretKey};

pub use device::DeviceState;
pub use engine::{run_round, EngineOptions, RoundPlan, World};
pub use messages::{Flag, OpeningMsg, PrepareMsg, UploadMsg};
pub use server::{ModelState, ServerState};
pub use transcript::{MsgKind, Party, Phase, RoundTranscript, TranscriptRecord};
pub use verify::Verdict;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error(transparent)]
    Lhh(#[from] LhhError),
    #[error(transparent)]
    Commitment(#[from] CommitmentError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error("device {0} appears twice")]
    DuplicateDevice(u32),
    #[error("device {0} is missing")]
    MissingDevice(u32),
    #[error("no opening from device {0}")]
    MissingOpening(u32),
    #[error("empty cohort")]
    EmptyCohort,
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("normal device {0} has no gradient to upload")]
    MissingGradient(u32),
    #[error("all cohort members unlearn; rescaling divides by zero")]
    DivisionByZero,
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("invalid round plan: {0}")]
    InvalidPlan(String),
    #[error("verification failed in round {round} for devices {devices:?}")]
    VerificationFailed { round: u64, devices: Vec<u32> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Normal,
    Unlearning,
}

/// Public parameters every party holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub pk: PaillierPublicKey,
    pub lhh: LhhParams,
    pub com: ComParams,
    pub codec: FixedPointSpec,
}

impl ProtocolParams {
    pub fn group(&self) -> &GroupDesc {
        &self.lhh.group
    }

    pub fn dim(&self) -> usize {
        self.lhh.dim
    }

    /// Both rings must hold any protocol sum without wrapping.
    pub fn check_codec(&self) -> Result<(), CodecError> {
        self.codec.check_modulus(&self.pk.n)?;
        self.codec.check_modulus(&self.lhh.group.q_order)
    }
}

/// Output of the trusted dealer: public parameters, the Paillier secret key
/// shared by devices, and the commitment trapdoor, which only the test
/// harness ever sees. Setups loaded from key files may lack the trapdoor.
#[derive(Debug, Clone)]
pub struct Setup {
    pub params: ProtocolParams,
    pub sk: PaillierSecretKey,
    pub trapdoor: Option<Trapdoor>,
}

impl Setup {
    pub fn generate(
        kappa_paillier: u64,
        kappa_group: u64,
        dim: usize,
        codec: FixedPointSpec,
        seed: &[u8],
    ) -> Result<Self, ProtocolError> {
        let (pk, sk) = paillier::keygen(kappa_paillier, &mut seeded_rng(&[b"paillier", seed]))?;
        let group = GroupDesc::for_security(kappa_group, seed)?;
        Self::from_parts(pk, sk, group, dim, codec, seed)
    }

    pub fn from_parts(
        pk: PaillierPublicKey,
        sk: PaillierSecretKey,
        group: GroupDesc,
        dim: usize,
        codec: FixedPointSpec,
        seed: &[u8],
    ) -> Result<Self, ProtocolError> {
        let lhh = LhhParams::with_group(group.clone(), dim);
        let (com, trapdoor) = ComParams::with_group(group, &mut seeded_rng(&[b"com-trapdoor", seed]));
        let params = ProtocolParams { pk, lhh, com, codec };
        params.check_codec()?;
        Ok(Self { params, sk, trapdoor: Some(trapdoor) })
    }

    /// Reassembles a setup from stored key material, checking that the
    /// pieces belong together.
    pub fn from_keys(
        pk: PaillierPublicKey,
        sk: PaillierSecretKey,
        lhh: LhhParams,
        com: ComParams,
        trapdoor: Option<Trapdoor>,
        codec: FixedPointSpec,
    ) -> Result<Self, ProtocolError> {
        if &sk.p * &sk.q != pk.n || pk != PaillierPublicKey::new(pk.n.clone()) {
            return Err(ProtocolError::Malformed("Paillier secret key does not match the public key".into()));
        }
        if lhh.group != com.group {
            return Err(ProtocolError::Malformed("hash and commitment groups differ".into()));
        }
        let lhh = LhhParams::from_generators(lhh.group, lhh.generators)?;
        if let Some(td) = &trapdoor {
            if com.group.pow(&com.g_com, &td.alpha) != com.h_com {
                return Err(ProtocolError::Malformed("trapdoor does not match the commitment key".into()));
            }
        }
        let params = ProtocolParams { pk, lhh, com, codec };
        params.check_codec()?;
        Ok(Self { params, sk, trapdoor })
    }
}
