// SPDX-License-Identifier: Apache-2.0

//! Linear homomorphic hash `h(m) = prod_i g_i^{m[i]} mod p` over `F_q^d`.
//!
//! Digests are single group elements, so their size does not depend on `d`.
//! `h(x) * h(y) = h(x + y)` gives [`lhh_eval`] its meaning: a linear
//! combination of digests equals the digest of the combined vector.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{hex_biguint, hex_biguint_vec, AlgebraError, GroupDesc};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LhhError {
    #[error("vector has {got} coordinates, parameters expect {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("coordinate {0} is not reduced modulo q")]
    CoordinateOutOfRange(usize),
    #[error("{0} digests but {1} coefficients")]
    LengthMismatch(usize, usize),
    #[error("generator {0} is not a non-identity subgroup element")]
    BadGenerator(usize),
    #[error("digest is not a subgroup element")]
    BadDigest,
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LhhParams {
    pub group: GroupDesc,
    #[serde(with = "hex_biguint_vec")]
    pub generators: Vec<BigUint>,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LhhDigest(#[serde(with = "hex_biguint")] pub BigUint);

impl LhhDigest {
    pub fn identity() -> Self {
        Self(BigUint::one())
    }

    pub fn to_bytes(&self, group: &GroupDesc) -> Vec<u8> {
        group.element_bytes(&self.0)
    }

    pub fn from_bytes(bytes: &[u8], group: &GroupDesc) -> Result<Self, LhhError> {
        let x = crate::algebra::from_fixed_bytes(bytes, group.element_len())?;
        Ok(Self(x))
    }
}

impl LhhParams {
    /// Generators `g_0..g_{d-1}` derived from the group seed.
    pub fn with_group(group: GroupDesc, dim: usize) -> Self {
        assert!(dim >= 1, "LHH dimension must be positive");
        let generators = (0..dim).map(|i| group.derive_generator(format!("g_{i}").as_bytes())).collect();
        Self { group, generators, dim }
    }

    /// Explicit generators, each checked for subgroup membership.
    pub fn from_generators(group: GroupDesc, generators: Vec<BigUint>) -> Result<Self, LhhError> {
        for (i, g) in generators.iter().enumerate() {
            if g.is_one() || !group.contains(g) {
                return Err(LhhError::BadGenerator(i));
            }
        }
        let dim = generators.len();
        Ok(Self { group, generators, dim })
    }

    pub fn digest_len(&self) -> usize {
        self.group.element_len()
    }
}

/// Deterministic parameters for security level `kappa_bits` and dimension `dim`.
pub fn lhh_setup(kappa_bits: u64, dim: usize, seed: &[u8]) -> Result<LhhParams, LhhError> {
    let group = GroupDesc::for_security(kappa_bits, seed)?;
    Ok(LhhParams::with_group(group, dim))
}

fn check_vector(params: &LhhParams, m: &[BigUint]) -> Result<(), LhhError> {
    if m.len() != params.dim {
        return Err(LhhError::DimMismatch { expected: params.dim, got: m.len() });
    }
    if let Some(i) = m.iter().position(|x| x >= &params.group.q_order) {
        return Err(LhhError::CoordinateOutOfRange(i));
    }
    Ok(())
}

/// `prod_i g_i^{m[i]} mod p`.
///
/// Residues above `q/2` are exponentiated as `(q - m[i])` into a separate
/// product that is inverted once at the end. Since `g^q = 1`, the result is
/// identical to [`lhh_hash_naive`], but signed gradient encodings only pay
/// for the bit length of their magnitude.
pub fn lhh_hash(params: &LhhParams, m: &[BigUint]) -> Result<LhhDigest, LhhError> {
    check_vector(params, m)?;
    let group = &params.group;
    let half = &group.q_order >> 1u32;
    let mut pos = BigUint::one();
    let mut neg = BigUint::one();
    for (g, x) in params.generators.iter().zip(m) {
        if x.is_zero() {
            continue;
        }
        if x <= &half {
            pos = group.mul(&pos, &group.pow(g, x));
        } else {
            neg = group.mul(&neg, &group.pow(g, &(&group.q_order - x)));
        }
    }
    if !neg.is_one() {
        pos = group.mul(&pos, &group.inv(&neg));
    }
    Ok(LhhDigest(pos))
}

/// Straight product of full-width exponentiations.
pub fn lhh_hash_naive(params: &LhhParams, m: &[BigUint]) -> Result<LhhDigest, LhhError> {
    check_vector(params, m)?;
    let group = &params.group;
    let h = params
        .generators
        .iter()
        .zip(m)
        .fold(BigUint::one(), |acc, (g, x)| group.mul(&acc, &group.pow(g, x)));
    Ok(LhhDigest(h))
}

/// `prod_i h_i^{f_i} mod p`; negative coefficients use the group inverse.
pub fn lhh_eval(
    group: &GroupDesc,
    digests: &[LhhDigest],
    coeffs: &[i64],
) -> Result<LhhDigest, LhhError> {
    if digests.len() != coeffs.len() || digests.is_empty() {
        return Err(LhhError::LengthMismatch(digests.len(), coeffs.len()));
    }
    let mut pos = BigUint::one();
    let mut neg = BigUint::one();
    for (h, &f) in digests.iter().zip(coeffs) {
        let e = BigUint::from(f.unsigned_abs());
        let term = match f.unsigned_abs() {
            0 => continue,
            1 => h.0.clone(),
            _ => group.pow(&h.0, &e),
        };
        if f > 0 {
            pos = group.mul(&pos, &term);
        } else {
            neg = group.mul(&neg, &term);
        }
    }
    if !neg.is_one() {
        pos = group.mul(&pos, &group.inv(&neg));
    }
    Ok(LhhDigest(pos))
}

/// [`lhh_eval`] with coefficients given as residues mod `q`.
pub fn lhh_eval_residues(
    group: &GroupDesc,
    digests: &[LhhDigest],
    coeffs: &[BigUint],
) -> Result<LhhDigest, LhhError> {
    if digests.len() != coeffs.len() || digests.is_empty() {
        return Err(LhhError::LengthMismatch(digests.len(), coeffs.len()));
    }
    let h = digests
        .iter()
        .zip(coeffs)
        .fold(BigUint::one(), |acc, (h, f)| group.mul(&acc, &group.pow(&h.0, f)));
    Ok(LhhDigest(h))
}
