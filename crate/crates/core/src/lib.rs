// SPDX-License-Identifier: Apache-2.0

//! Verifiable federated unlearning: encrypted aggregation that subtracts
//! departing devices' historical contributions, with hash-and-commit checks
//! that let those devices confirm the removal.

pub mod adversary;
pub mod algebra;
pub mod audit;
pub mod codec;
pub mod commitment;
pub mod config;
pub mod lhh;
pub mod metrics;
pub mod paillier;
pub mod protocol;
pub mod simtrain;

pub use adversary::{AdversaryError, ServerBehavior};
pub use algebra::{BigUint, GroupDesc};
pub use codec::{EncodedVector, FixedPointSpec};
pub use commitment::{ComParams, Commitment, Trapdoor};
pub use lhh::{LhhDigest, LhhParams};
pub use metrics::MetricsLedger;
pub use paillier::{Ciphertext, CiphertextVector, PaillierPublicKey, PaillierSecretKey};
pub use protocol::{ProtocolError, ProtocolParams, Setup};
