// SPDX-License-Identifier: Apache-2.0

//! Paillier additively homomorphic encryption with `g = n + 1`.
//!
//! Plaintexts live in `Z_n`; ciphertexts in `Z*_{n^2}`. Addition of
//! plaintexts is ciphertext multiplication, subtraction multiplies by the
//! inverse, and scaling by a public constant is exponentiation.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{self, byte_len, hex_biguint, mod_inv, to_fixed_bytes, AlgebraError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PaillierError {
    #[error("plaintext is not below the modulus n")]
    MessageOutOfRange,
    #[error("ciphertext is not a unit modulo n^2")]
    InvalidCiphertext,
    #[error("ciphertext has no inverse modulo n^2")]
    NotInvertible,
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid key material: {0}")]
    InvalidKey(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaillierPublicKey {
    #[serde(with = "hex_biguint")]
    pub n: BigUint,
    #[serde(with = "hex_biguint")]
    pub g: BigUint,
    #[serde(with = "hex_biguint")]
    pub n_sq: BigUint,
}

impl PaillierPublicKey {
    pub fn new(n: BigUint) -> Self {
        let g = &n + 1u32;
        let n_sq = &n * &n;
        Self { n, g, n_sq }
    }

    /// Width of a serialized ciphertext.
    pub fn ciphertext_len(&self) -> usize {
        byte_len(&self.n_sq)
    }
}

/// Secret key. Holds the factorization so decryption can run mod `p^2` and
/// `q^2` separately.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSecretKey", into = "RawSecretKey")]
pub struct PaillierSecretKey {
    pub lambda: BigUint,
    pub mu: BigUint,
    pub p: BigUint,
    pub q: BigUint,
    crt: CrtParts,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CrtParts {
    p_sq: BigUint,
    q_sq: BigUint,
    p_minus_1: BigUint,
    q_minus_1: BigUint,
    hp: BigUint,
    hq: BigUint,
    // q^{-1} mod p
    q_inv_p: BigUint,
    // n mod phi(p^2), n mod phi(q^2), (p^2)^{-1} mod q^2
    n_mod_phi_p_sq: BigUint,
    n_mod_phi_q_sq: BigUint,
    p_sq_inv_q_sq: BigUint,
}

#[derive(Serialize, Deserialize)]
struct RawSecretKey {
    #[serde(with = "hex_biguint")]
    lambda: BigUint,
    #[serde(with = "hex_biguint")]
    mu: BigUint,
    #[serde(with = "hex_biguint")]
    p: BigUint,
    #[serde(with = "hex_biguint")]
    q: BigUint,
}

impl From<PaillierSecretKey> for RawSecretKey {
    fn from(sk: PaillierSecretKey) -> Self {
        Self { lambda: sk.lambda, mu: sk.mu, p: sk.p, q: sk.q }
    }
}

impl TryFrom<RawSecretKey> for PaillierSecretKey {
    type Error = PaillierError;

    fn try_from(raw: RawSecretKey) -> Result<Self, Self::Error> {
        let (_, sk) = keypair_from_primes(raw.p, raw.q)?;
        if sk.lambda != raw.lambda || sk.mu != raw.mu {
            return Err(PaillierError::InvalidKey("lambda/mu inconsistent with p, q".into()));
        }
        Ok(sk)
    }
}

/// `L(x) = (x - 1) / d`.
fn l_function(x: &BigUint, d: &BigUint) -> BigUint {
    (x - 1u32) / d
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ciphertext(#[serde(with = "hex_biguint")] pub BigUint);

impl Ciphertext {
    pub fn to_bytes(&self, pk: &PaillierPublicKey) -> Vec<u8> {
        to_fixed_bytes(&self.0, pk.ciphertext_len())
    }

    pub fn from_bytes(bytes: &[u8], pk: &PaillierPublicKey) -> Result<Self, PaillierError> {
        Ok(Self(algebra::from_fixed_bytes(bytes, pk.ciphertext_len())?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CiphertextVector {
    pub coords: Vec<Ciphertext>,
}

impl CiphertextVector {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn to_bytes(&self, pk: &PaillierPublicKey) -> Vec<u8> {
        self.coords.iter().flat_map(|c| c.to_bytes(pk)).collect()
    }

    pub fn from_bytes(bytes: &[u8], pk: &PaillierPublicKey) -> Result<Self, PaillierError> {
        let w = pk.ciphertext_len();
        if !bytes.len().is_multiple_of(w) {
            return Err(AlgebraError::WidthMismatch { expected: w, got: bytes.len() % w }.into());
        }
        let coords = bytes
            .chunks(w)
            .map(|c| Ciphertext::from_bytes(c, pk))
            .collect::<Result<_, _>>()?;
        Ok(Self { coords })
    }
}

/// Builds a key pair from two given primes.
pub fn keypair_from_primes(
    p: BigUint,
    q: BigUint,
) -> Result<(PaillierPublicKey, PaillierSecretKey), PaillierError> {
    if p == q {
        return Err(PaillierError::InvalidKey("p == q".into()));
    }
    let n = &p * &q;
    let p_minus_1 = &p - 1u32;
    let q_minus_1 = &q - 1u32;
    if !n.gcd(&(&p_minus_1 * &q_minus_1)).is_one() {
        return Err(PaillierError::InvalidKey("gcd(pq, (p-1)(q-1)) != 1".into()));
    }
    let pk = PaillierPublicKey::new(n);
    let lambda = p_minus_1.lcm(&q_minus_1);
    let u = pk.g.modpow(&lambda, &pk.n_sq);
    let mu = mod_inv(&l_function(&u, &pk.n), &pk.n)?;

    let p_sq = &p * &p;
    let q_sq = &q * &q;
    let hp = mod_inv(&l_function(&pk.g.modpow(&p_minus_1, &p_sq), &p), &p)?;
    let hq = mod_inv(&l_function(&pk.g.modpow(&q_minus_1, &q_sq), &q), &q)?;
    let q_inv_p = mod_inv(&(&q % &p), &p)?;
    let n_mod_phi_p_sq = &pk.n % (&p * &p_minus_1);
    let n_mod_phi_q_sq = &pk.n % (&q * &q_minus_1);
    let p_sq_inv_q_sq = mod_inv(&(&p_sq % &q_sq), &q_sq)?;
    let crt = CrtParts {
        p_sq,
        q_sq,
        p_minus_1,
        q_minus_1,
        hp,
        hq,
        q_inv_p,
        n_mod_phi_p_sq,
        n_mod_phi_q_sq,
        p_sq_inv_q_sq,
    };
    Ok((pk, PaillierSecretKey { lambda, mu, p, q, crt }))
}

/// Key generation with an `kappa_bits`-bit modulus `n`.
pub fn keygen<R: RngCore + ?Sized>(
    kappa_bits: u64,
    rng: &mut R,
) -> Result<(PaillierPublicKey, PaillierSecretKey), PaillierError> {
    if kappa_bits < 32 {
        return Err(AlgebraError::InvalidBits(kappa_bits).into());
    }
    let half = kappa_bits / 2;
    loop {
        let p = algebra::gen_prime(half, rng)?;
        let q = algebra::gen_prime(kappa_bits - half, rng)?;
        if (&p * &q).bits() != kappa_bits {
            continue;
        }
        match keypair_from_primes(p, q) {
            Ok(kp) => return Ok(kp),
            Err(PaillierError::InvalidKey(_)) => continue,
            Err(e) => return Err(e),
        }
    }
}

/// Encryption with caller-chosen randomness `r ∈ Z*_n`.
pub fn encrypt_with_r(
    pk: &PaillierPublicKey,
    m: &BigUint,
    r: &BigUint,
) -> Result<Ciphertext, PaillierError> {
    if m >= &pk.n {
        return Err(PaillierError::MessageOutOfRange);
    }
    // (1 + n)^m = 1 + m*n  (mod n^2)
    let gm = (m * &pk.n + 1u32) % &pk.n_sq;
    let rn = r.modpow(&pk.n, &pk.n_sq);
    Ok(Ciphertext((gm * rn) % &pk.n_sq))
}

fn sample_unit<R: RngCore + ?Sized>(pk: &PaillierPublicKey, rng: &mut R) -> BigUint {
    loop {
        let r = algebra::random_range(&BigUint::one(), &pk.n, rng);
        if algebra::coprime(&r, &pk.n) {
            return r;
        }
    }
}

pub fn encrypt<R: RngCore + ?Sized>(
    pk: &PaillierPublicKey,
    m: &BigUint,
    rng: &mut R,
) -> Result<Ciphertext, PaillierError> {
    if m >= &pk.n {
        return Err(PaillierError::MessageOutOfRange);
    }
    let r = sample_unit(pk, rng);
    encrypt_with_r(pk, m, &r)
}

/// Encryption for holders of the secret key: `r^n` is computed modulo `p^2`
/// and `q^2` separately. Same randomness draws and output as [`encrypt`].
pub fn encrypt_crt<R: RngCore + ?Sized>(
    pk: &PaillierPublicKey,
    sk: &PaillierSecretKey,
    m: &BigUint,
    rng: &mut R,
) -> Result<Ciphertext, PaillierError> {
    if m >= &pk.n {
        return Err(PaillierError::MessageOutOfRange);
    }
    let r = sample_unit(pk, rng);
    let c = &sk.crt;
    let a = r.modpow(&c.n_mod_phi_p_sq, &c.p_sq);
    let b = r.modpow(&c.n_mod_phi_q_sq, &c.q_sq);
    let diff = (&b + &c.q_sq - (&a % &c.q_sq)) % &c.q_sq;
    let rn = a + &c.p_sq * ((diff * &c.p_sq_inv_q_sq) % &c.q_sq);
    let gm = (m * &pk.n + 1u32) % &pk.n_sq;
    Ok(Ciphertext((gm * rn) % &pk.n_sq))
}

fn check_ciphertext(pk: &PaillierPublicKey, ct: &Ciphertext) -> Result<(), PaillierError> {
    if ct.0.is_zero() || ct.0 >= pk.n_sq || !algebra::coprime(&ct.0, &pk.n) {
        return Err(PaillierError::InvalidCiphertext);
    }
    Ok(())
}

/// Textbook decryption `L(c^lambda mod n^2) * mu mod n`.
pub fn decrypt_reference(
    sk: &PaillierSecretKey,
    pk: &PaillierPublicKey,
    ct: &Ciphertext,
) -> Result<BigUint, PaillierError> {
    check_ciphertext(pk, ct)?;
    let u = ct.0.modpow(&sk.lambda, &pk.n_sq);
    Ok((l_function(&u, &pk.n) * &sk.mu) % &pk.n)
}

/// Decryption via the factorization; agrees with [`decrypt_reference`].
pub fn decrypt(
    sk: &PaillierSecretKey,
    pk: &PaillierPublicKey,
    ct: &Ciphertext,
) -> Result<BigUint, PaillierError> {
    check_ciphertext(pk, ct)?;
    let c = &sk.crt;
    let mp = (l_function(&ct.0.modpow(&c.p_minus_1, &c.p_sq), &sk.p) * &c.hp) % &sk.p;
    let mq = (l_function(&ct.0.modpow(&c.q_minus_1, &c.q_sq), &sk.q) * &c.hq) % &sk.q;
    // m = mq + q * ((mp - mq) * q^{-1} mod p)
    let diff = (&mp + &sk.p - (&mq % &sk.p)) % &sk.p;
    let h = (diff * &c.q_inv_p) % &sk.p;
    Ok((mq + h * &sk.q) % &pk.n)
}

pub fn ct_add(pk: &PaillierPublicKey, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
    Ciphertext((&a.0 * &b.0) % &pk.n_sq)
}

pub fn ct_sub(
    pk: &PaillierPublicKey,
    a: &Ciphertext,
    b: &Ciphertext,
) -> Result<Ciphertext, PaillierError> {
    let inv = mod_inv(&b.0, &pk.n_sq).map_err(|_| PaillierError::NotInvertible)?;
    Ok(Ciphertext((&a.0 * inv) % &pk.n_sq))
}

pub fn ct_scale(pk: &PaillierPublicKey, a: &Ciphertext, k: &BigUint) -> Ciphertext {
    Ciphertext(a.0.modpow(k, &pk.n_sq))
}

pub fn vec_encrypt<R: RngCore + ?Sized>(
    pk: &PaillierPublicKey,
    ms: &[BigUint],
    rng: &mut R,
) -> Result<CiphertextVector, PaillierError> {
    let coords = ms.iter().map(|m| encrypt(pk, m, rng)).collect::<Result<_, _>>()?;
    Ok(CiphertextVector { coords })
}

pub fn vec_encrypt_crt<R: RngCore + ?Sized>(
    pk: &PaillierPublicKey,
    sk: &PaillierSecretKey,
    ms: &[BigUint],
    rng: &mut R,
) -> Result<CiphertextVector, PaillierError> {
    let coords = ms.iter().map(|m| encrypt_crt(pk, sk, m, rng)).collect::<Result<_, _>>()?;
    Ok(CiphertextVector { coords })
}

pub fn vec_decrypt(
    sk: &PaillierSecretKey,
    pk: &PaillierPublicKey,
    v: &CiphertextVector,
) -> Result<Vec<BigUint>, PaillierError> {
    v.coords.iter().map(|c| decrypt(sk, pk, c)).collect()
}

pub fn vec_add(
    pk: &PaillierPublicKey,
    a: &CiphertextVector,
    b: &CiphertextVector,
) -> Result<CiphertextVector, PaillierError> {
    if a.len() != b.len() {
        return Err(PaillierError::LengthMismatch(a.len(), b.len()));
    }
    let coords = a.coords.iter().zip(&b.coords).map(|(x, y)| ct_add(pk, x, y)).collect();
    Ok(CiphertextVector { coords })
}

pub fn vec_sub(
    pk: &PaillierPublicKey,
    a: &CiphertextVector,
    b: &CiphertextVector,
) -> Result<CiphertextVector, PaillierError> {
    if a.len() != b.len() {
        return Err(PaillierError::LengthMismatch(a.len(), b.len()));
    }
    let coords = a
        .coords
        .iter()
        .zip(&b.coords)
        .map(|(x, y)| ct_sub(pk, x, y))
        .collect::<Result<_, _>>()?;
    Ok(CiphertextVector { coords })
}

pub fn vec_scale(pk: &PaillierPublicKey, a: &CiphertextVector, k: &BigUint) -> CiphertextVector {
    CiphertextVector { coords: a.coords.iter().map(|c| ct_scale(pk, c, k)).collect() }
}
