// SPDX-License-Identifier: Apache-2.0

//! Pedersen commitments `g^x h^r mod p` with trapdoor `alpha = log_g h`.
//!
//! Binding holds as long as `alpha` is unknown. Whoever holds `alpha` can
//! open any commitment to any message via [`equivocate`].

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::algebra::{self, hex_biguint, mod_inv, seeded_rng, AlgebraError, GroupDesc};
use crate::lhh::LhhDigest;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommitmentError {
    #[error("generator is not a non-identity subgroup element")]
    BadGenerator,
    #[error("trapdoor must be a nonzero residue mod q")]
    BadTrapdoor,
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComParams {
    pub group: GroupDesc,
    #[serde(with = "hex_biguint")]
    pub g_com: BigUint,
    #[serde(with = "hex_biguint")]
    pub h_com: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trapdoor {
    #[serde(with = "hex_biguint")]
    pub alpha: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Commitment(#[serde(with = "hex_biguint")] pub BigUint);

impl Commitment {
    pub fn to_bytes(&self, params: &ComParams) -> Vec<u8> {
        params.group.element_bytes(&self.0)
    }

    pub fn from_bytes(bytes: &[u8], params: &ComParams) -> Result<Self, CommitmentError> {
        Ok(Self(algebra::from_fixed_bytes(bytes, params.group.element_len())?))
    }
}

/// Field-encoded message plus randomness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opening {
    #[serde(with = "hex_biguint")]
    pub message_field: BigUint,
    #[serde(with = "hex_biguint")]
    pub r: BigUint,
}

impl ComParams {
    /// `g_com` derived from the group seed, `h_com = g_com^alpha` for a fresh
    /// `alpha` in `[1, q)`.
    pub fn with_group<R: RngCore + ?Sized>(group: GroupDesc, rng: &mut R) -> (Self, Trapdoor) {
        let g_com = group.derive_generator(b"com_g");
        let alpha = algebra::random_range(&BigUint::one(), &group.q_order, rng);
        let h_com = group.pow(&g_com, &alpha);
        (Self { group, g_com, h_com }, Trapdoor { alpha })
    }

    /// Parameters from an explicit generator and trapdoor.
    pub fn from_parts(
        group: GroupDesc,
        g_com: BigUint,
        alpha: BigUint,
    ) -> Result<(Self, Trapdoor), CommitmentError> {
        if g_com.is_one() || !group.contains(&g_com) {
            return Err(CommitmentError::BadGenerator);
        }
        if alpha.is_zero() || alpha >= group.q_order {
            return Err(CommitmentError::BadTrapdoor);
        }
        let h_com = group.pow(&g_com, &alpha);
        Ok((Self { group, g_com, h_com }, Trapdoor { alpha }))
    }

    pub fn commitment_len(&self) -> usize {
        self.group.element_len()
    }

    pub fn randomness_len(&self) -> usize {
        self.group.scalar_len()
    }
}

pub fn com_setup(kappa_bits: u64, seed: &[u8]) -> Result<(ComParams, Trapdoor), CommitmentError> {
    let group = GroupDesc::for_security(kappa_bits, seed)?;
    let mut rng = seeded_rng(&[b"com-trapdoor", seed]);
    Ok(ComParams::with_group(group, &mut rng))
}

/// SHA-256 of the digest's fixed-width encoding, reduced mod `q`.
pub fn encode_message(params: &ComParams, digest: &LhhDigest) -> BigUint {
    let h = Sha256::digest(digest.to_bytes(&params.group));
    BigUint::from_bytes_be(&h) % &params.group.q_order
}

pub fn commit(params: &ComParams, x: &BigUint, r: &BigUint) -> Commitment {
    debug_assert!(x < &params.group.q_order && r < &params.group.q_order);
    let g = &params.group;
    Commitment(g.mul(&g.pow(&params.g_com, x), &g.pow(&params.h_com, r)))
}

pub fn decommit(params: &ComParams, c: &Commitment, x: &BigUint, r: &BigUint) -> bool {
    let q = &params.group.q_order;
    x < q && r < q && commit(params, x, r) == *c
}

/// `r' = r + (x - x') / alpha mod q`, so `g^x' h^r' = g^x h^r`.
pub fn equivocate(
    params: &ComParams,
    td: &Trapdoor,
    x: &BigUint,
    r: &BigUint,
    x_new: &BigUint,
) -> Result<BigUint, CommitmentError> {
    let q = &params.group.q_order;
    let alpha_inv = mod_inv(&td.alpha, q).map_err(|_| CommitmentError::BadTrapdoor)?;
    let diff = (x + q - (x_new % q)) % q;
    Ok((r + diff * alpha_inv) % q)
}
