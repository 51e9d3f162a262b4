// SPDX-License-Identifier: Apache-2.0

//! Fixed-point encoding of real vectors into `Z_m`.
//!
//! Values are scaled by `2^scale_bits`, rounded, and embedded with the
//! centered convention: residues above `m/2` decode as negative. The same
//! integer vector feeds both the ciphertext path (mod `n`) and the hash path
//! (mod `q`), so sums computed in either ring lift back to identical integers.

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::signed_to_residue;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("coordinate {index} = {value} exceeds the encodable bound {bound}")]
    OutOfBound { index: usize, value: f64, bound: f64 },
    #[error("modulus of {modulus_bits} bits is too small for {max_terms} terms at scale 2^{scale_bits} and bound {bound}")]
    ModulusTooSmall { modulus_bits: u64, max_terms: u64, scale_bits: u32, bound: f64 },
    #[error("invalid fixed-point spec: {0}")]
    InvalidSpec(String),
    #[error("decoded coordinate {index} lies outside the protocol sum bound")]
    SumOutOfRange { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSpec {
    pub scale_bits: u32,
    /// Largest absolute value a single fresh encoding may carry.
    pub bound: f64,
    /// Most encoded vectors any protocol sum may combine.
    pub max_terms: u64,
}

impl Default for FixedPointSpec {
    fn default() -> Self {
        Self { scale_bits: 24, bound: 4.0, max_terms: 500 }
    }
}

impl FixedPointSpec {
    pub fn new(scale_bits: u32, bound: f64, max_terms: u64) -> Result<Self, CodecError> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(CodecError::InvalidSpec(format!("bound must be positive, got {bound}")));
        }
        if max_terms == 0 {
            return Err(CodecError::InvalidSpec("max_terms must be >= 1".into()));
        }
        if scale_bits > 60 {
            return Err(CodecError::InvalidSpec(format!("scale_bits {scale_bits} > 60")));
        }
        let spec = Self { scale_bits, bound, max_terms };
        // Sums must also stay inside the i128 working representation.
        if spec.sum_bound() >= (1u128 << 126) as f64 {
            return Err(CodecError::InvalidSpec("sum bound exceeds 2^126".into()));
        }
        Ok(spec)
    }

    pub fn scale(&self) -> f64 {
        (self.scale_bits as f64).exp2()
    }

    /// Largest coordinate magnitude of a fresh encoding.
    pub fn max_coord(&self) -> i128 {
        (self.bound * self.scale()).floor() as i128
    }

    fn sum_bound(&self) -> f64 {
        self.max_terms as f64 * self.bound * self.scale()
    }

    /// Largest coordinate magnitude any legitimate protocol sum can reach.
    pub fn max_sum_coord(&self) -> i128 {
        self.max_terms as i128 * (self.max_coord() + 1)
    }

    /// Checks `max_terms * bound * 2^scale_bits < modulus / 2`.
    pub fn check_modulus(&self, modulus: &BigUint) -> Result<(), CodecError> {
        let limit = BigUint::from(self.max_terms) * BigUint::from(self.max_coord() as u128 + 1);
        if limit * 2u32 >= *modulus {
            return Err(CodecError::ModulusTooSmall {
                modulus_bits: modulus.bits(),
                max_terms: self.max_terms,
                scale_bits: self.scale_bits,
                bound: self.bound,
            });
        }
        Ok(())
    }
}

/// Integer image of a real vector, in centered (signed) form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedVector {
    pub coords: Vec<i128>,
}

impl EncodedVector {
    pub fn zeros(dim: usize) -> Self {
        Self { coords: vec![0; dim] }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn add_assign(&mut self, other: &EncodedVector) {
        assert_eq!(self.len(), other.len(), "EncodedVector length mismatch");
        for (a, b) in self.coords.iter_mut().zip(&other.coords) {
            *a += *b;
        }
    }

    pub fn sub_assign(&mut self, other: &EncodedVector) {
        assert_eq!(self.len(), other.len(), "EncodedVector length mismatch");
        for (a, b) in self.coords.iter_mut().zip(&other.coords) {
            *a -= *b;
        }
    }
}

impl From<Vec<i128>> for EncodedVector {
    fn from(coords: Vec<i128>) -> Self {
        Self { coords }
    }
}

/// `round(x * 2^scale_bits)`, ties away from zero.
pub fn encode(x: &[f64], spec: &FixedPointSpec) -> Result<EncodedVector, CodecError> {
    let scale = spec.scale();
    let coords = x
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if value.is_nan() || value.abs() > spec.bound {
                return Err(CodecError::OutOfBound { index, value, bound: spec.bound });
            }
            Ok((value * scale).round() as i128)
        })
        .collect::<Result<_, _>>()?;
    Ok(EncodedVector { coords })
}

pub fn to_ring(v: &EncodedVector, modulus: &BigUint) -> Vec<BigUint> {
    v.coords.iter().map(|&c| signed_to_residue(c, modulus)).collect()
}

/// Centered lift: residues above `modulus / 2` become negative.
pub fn from_ring(r: &[BigUint], modulus: &BigUint) -> EncodedVector {
    let half = modulus >> 1u32;
    let coords = r
        .iter()
        .map(|x| {
            let x = x % modulus;
            if x <= half {
                x.to_i128().expect("residue exceeds i128; codec bound violated")
            } else {
                -(modulus - x).to_i128().expect("residue exceeds i128; codec bound violated")
            }
        })
        .collect();
    EncodedVector { coords }
}

/// Centered lift that rejects coordinates beyond `spec.max_sum_coord()`.
pub fn try_from_ring(
    r: &[BigUint],
    modulus: &BigUint,
    spec: &FixedPointSpec,
) -> Result<EncodedVector, CodecError> {
    let half = modulus >> 1u32;
    let limit = spec.max_sum_coord();
    let coords = r
        .iter()
        .enumerate()
        .map(|(index, x)| {
            let x = x % modulus;
            let c = if x <= half { x.to_i128() } else { (modulus - x).to_i128().map(|m| -m) };
            c.filter(|c| c.abs() <= limit).ok_or(CodecError::SumOutOfRange { index })
        })
        .collect::<Result<_, _>>()?;
    Ok(EncodedVector { coords })
}

/// `coord / (divisor * 2^scale_bits)`.
pub fn decode(v: &EncodedVector, divisor: u64, spec: &FixedPointSpec) -> Vec<f64> {
    assert!(divisor >= 1, "decode divisor must be positive");
    let denom = divisor as f64 * spec.scale();
    v.coords.iter().map(|&c| c as f64 / denom).collect()
}
