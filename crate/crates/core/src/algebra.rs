// SPDX-License-Identifier: Apache-2.0

//! Modular arithmetic, prime generation and prime-order subgroups of safe-prime
//! groups.
//!
//! Every group used by the hashing and commitment layers is the subgroup of
//! quadratic residues of `Z*_p` for a safe prime `p = 2q + 1`. Its order is the
//! prime `q`, so every element other than 1 generates it.

pub use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Miller-Rabin rounds used for every primality decision.
pub const MILLER_RABIN_ROUNDS: usize = 40;

/// Smallest bit length accepted by [`gen_prime`].
pub const MIN_PRIME_BITS: u64 = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("value is not invertible modulo the given modulus")]
    NotInvertible,
    #[error("prime bit length {0} is below the minimum of {MIN_PRIME_BITS}")]
    InvalidBits(u64),
    #[error("invalid group description: {0}")]
    InvalidGroup(String),
    #[error("byte string of length {got} does not fit a field of {expected} bytes")]
    WidthMismatch { expected: usize, got: usize },
}

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Uniform integer with at most `bits` bits.
pub fn random_bits<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    if bits == 0 {
        return BigUint::zero();
    }
    let nbytes = bits.div_ceil(8) as usize;
    let mut buf = vec![0u8; nbytes];
    rng.fill_bytes(&mut buf);
    let excess = (nbytes as u64) * 8 - bits;
    buf[0] &= 0xffu8 >> excess;
    BigUint::from_bytes_be(&buf)
}

/// Uniform integer in `[0, bound)` by rejection sampling.
pub fn random_below<R: RngCore + ?Sized>(bound: &BigUint, rng: &mut R) -> BigUint {
    assert!(!bound.is_zero(), "random_below: empty range");
    let bits = bound.bits();
    loop {
        let candidate = random_bits(bits, rng);
        if &candidate < bound {
            return candidate;
        }
    }
}

/// Uniform integer in `[low, high)`.
pub fn random_range<R: RngCore + ?Sized>(low: &BigUint, high: &BigUint, rng: &mut R) -> BigUint {
    assert!(low < high, "random_range: empty range");
    low + random_below(&(high - low), rng)
}

/// `base^exp mod modulus`.
pub fn mod_pow(base: &BigUint, exp: &BigUint, modulus: &BigUint) -> BigUint {
    debug_assert!(modulus >= &BigUint::from(2u8), "mod_pow: modulus must be >= 2");
    base.modpow(exp, modulus)
}

/// Multiplicative inverse of `x` modulo `modulus`.
pub fn mod_inv(x: &BigUint, modulus: &BigUint) -> Result<BigUint, AlgebraError> {
    if modulus <= &BigUint::one() {
        return Err(AlgebraError::NotInvertible);
    }
    x.modinv(modulus).ok_or(AlgebraError::NotInvertible)
}

fn trial_division(n: &BigUint) -> Option<bool> {
    for &p in SMALL_PRIMES.iter() {
        let p = BigUint::from(p);
        if n == &p {
            return Some(true);
        }
        if (n % &p).is_zero() {
            return Some(false);
        }
    }
    // Every composite below 257^2 has a factor in the table.
    if n < &BigUint::from(257u32 * 257) {
        return Some(n > &BigUint::one());
    }
    None
}

/// Probabilistic primality test: trial division by small primes followed by
/// `rounds` Miller-Rabin rounds with bases drawn from `rng`.
pub fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    if n < &BigUint::from(2u8) {
        return false;
    }
    if let Some(decided) = trial_division(n) {
        return decided;
    }
    let one = BigUint::one();
    let two = BigUint::from(2u8);
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    let base_high = n - &one;

    'witness: for _ in 0..rounds {
        let a = random_range(&two, &base_high, rng);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_1 {
                continue 'witness;
            }
            if x == one {
                return false;
            }
        }
        return false;
    }
    true
}

fn random_odd_with_top_bit<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    let mut c = random_bits(bits, rng);
    c.set_bit(bits - 1, true);
    c.set_bit(0, true);
    c
}

/// Probable prime of exactly `bits` bits.
pub fn gen_prime<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> Result<BigUint, AlgebraError> {
    if bits < MIN_PRIME_BITS {
        return Err(AlgebraError::InvalidBits(bits));
    }
    loop {
        let candidate = random_odd_with_top_bit(bits, rng);
        if is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng) {
            return Ok(candidate);
        }
    }
}

/// Safe prime pair `(p, q)` with `p = 2q + 1`, `q` of exactly `q_bits` bits.
pub fn gen_safe_prime<R: RngCore + ?Sized>(
    q_bits: u64,
    rng: &mut R,
) -> Result<(BigUint, BigUint), AlgebraError> {
    if q_bits < MIN_PRIME_BITS {
        return Err(AlgebraError::InvalidBits(q_bits));
    }
    let sieve: Vec<u32> = SMALL_PRIMES[1..].to_vec();
    loop {
        let q = random_odd_with_top_bit(q_bits, rng);
        // q and 2q+1 must both avoid every small factor.
        let rejected = sieve.iter().any(|&sp| {
            let r = (&q % sp).to_u32_digits().first().copied().unwrap_or(0);
            let small = BigUint::from(sp);
            (r == 0 && q != small) || (2 * r as u64 + 1).is_multiple_of(sp as u64)
        });
        if rejected {
            continue;
        }
        // A single cheap round on q before paying for the full test on both.
        if !is_probable_prime(&q, 1, rng) {
            continue;
        }
        let p = (&q << 1u32) + 1u32;
        if is_probable_prime(&p, MILLER_RABIN_ROUNDS, rng)
            && is_probable_prime(&q, MILLER_RABIN_ROUNDS, rng)
        {
            return Ok((p, q));
        }
    }
}

/// Number of bytes in the fixed-width encoding of residues mod `modulus`.
pub fn byte_len(modulus: &BigUint) -> usize {
    modulus.bits().div_ceil(8) as usize
}

/// Big-endian encoding left-padded to `width` bytes.
pub fn to_fixed_bytes(x: &BigUint, width: usize) -> Vec<u8> {
    let raw = if x.is_zero() { Vec::new() } else { x.to_bytes_be() };
    assert!(raw.len() <= width, "value wider than its fixed-width field");
    let mut out = vec![0u8; width - raw.len()];
    out.extend_from_slice(&raw);
    out
}

/// Parses a fixed-width big-endian field.
pub fn from_fixed_bytes(bytes: &[u8], width: usize) -> Result<BigUint, AlgebraError> {
    if bytes.len() != width {
        return Err(AlgebraError::WidthMismatch { expected: width, got: bytes.len() });
    }
    Ok(BigUint::from_bytes_be(bytes))
}

/// Deterministic ChaCha20 stream keyed by SHA-256 over the given labels.
///
/// All protocol randomness is derived through this so that every party's
/// draws depend only on the campaign seed and the draw's position.
pub fn seeded_rng(parts: &[&[u8]]) -> ChaCha20Rng {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_be_bytes());
        h.update(p);
    }
    ChaCha20Rng::from_seed(h.finalize().into())
}

/// 2048-bit MODP group 14 prime (RFC 3526); a safe prime.
const RFC3526_2048_HEX: &str = "\
FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74\
020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437\
4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED\
EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05\
98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB\
9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B\
E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718\
3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF";

/// A prime-order subgroup of `Z*_p` for a safe prime `p = 2q + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupDesc {
    #[serde(with = "hex_biguint")]
    pub p_mod: BigUint,
    #[serde(with = "hex_biguint")]
    pub q_order: BigUint,
    #[serde(with = "hex::serde")]
    pub seed: Vec<u8>,
}

impl GroupDesc {
    /// Builds a description, checking `p = 2q + 1` and primality of both.
    pub fn new(p_mod: BigUint, q_order: BigUint, seed: &[u8]) -> Result<Self, AlgebraError> {
        if p_mod != (&q_order << 1u32) + 1u32 {
            return Err(AlgebraError::InvalidGroup("p_mod != 2*q_order + 1".into()));
        }
        let mut rng = seeded_rng(&[b"group-check", seed]);
        if !is_probable_prime(&q_order, MILLER_RABIN_ROUNDS, &mut rng) {
            return Err(AlgebraError::InvalidGroup("q_order is not prime".into()));
        }
        if !is_probable_prime(&p_mod, MILLER_RABIN_ROUNDS, &mut rng) {
            return Err(AlgebraError::InvalidGroup("p_mod is not prime".into()));
        }
        Ok(Self { p_mod, q_order, seed: seed.to_vec() })
    }

    /// Fresh safe-prime group with a `q_bits`-bit order, deterministic in `seed`.
    pub fn generate(q_bits: u64, seed: &[u8]) -> Result<Self, AlgebraError> {
        let mut rng = seeded_rng(&[b"safe-prime", &q_bits.to_be_bytes(), seed]);
        let (p_mod, q_order) = gen_safe_prime(q_bits, &mut rng)?;
        Ok(Self { p_mod, q_order, seed: seed.to_vec() })
    }

    /// The 2048-bit RFC 3526 group; `seed` only affects generator derivation.
    pub fn rfc3526_2048(seed: &[u8]) -> Self {
        let p_mod = BigUint::parse_bytes(RFC3526_2048_HEX.as_bytes(), 16).expect("constant");
        let q_order = (&p_mod - 1u32) >> 1u32;
        Self { p_mod, q_order, seed: seed.to_vec() }
    }

    /// `kappa = 2048` selects the RFC 3526 group, anything else a generated
    /// group whose order has `kappa` bits.
    pub fn for_security(kappa: u64, seed: &[u8]) -> Result<Self, AlgebraError> {
        if kappa == 2048 {
            Ok(Self::rfc3526_2048(seed))
        } else {
            Self::generate(kappa, seed)
        }
    }

    /// Bytes per serialized group element.
    pub fn element_len(&self) -> usize {
        byte_len(&self.p_mod)
    }

    /// Bytes per serialized exponent.
    pub fn scalar_len(&self) -> usize {
        byte_len(&self.q_order)
    }

    /// True when `x` lies in the order-q subgroup.
    pub fn contains(&self, x: &BigUint) -> bool {
        !x.is_zero() && x < &self.p_mod && x.modpow(&self.q_order, &self.p_mod).is_one()
    }

    pub fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.p_mod
    }

    pub fn pow(&self, base: &BigUint, exp: &BigUint) -> BigUint {
        base.modpow(exp, &self.p_mod)
    }

    /// Group inverse; in the order-q subgroup this is `x^(q-1)`.
    pub fn inv(&self, x: &BigUint) -> BigUint {
        mod_inv(x, &self.p_mod).expect("subgroup elements are units")
    }

    /// Hash-to-subgroup: `H(seed || label || ctr)^2 mod p`, bumping `ctr`
    /// until the result is neither 0 nor 1.
    pub fn derive_generator(&self, label: &[u8]) -> BigUint {
        let mut ctr: u32 = 0;
        loop {
            let mut h = Sha256::new();
            h.update(&self.seed);
            h.update(label);
            h.update(ctr.to_be_bytes());
            let base = BigUint::from_bytes_be(&h.finalize()) % &self.p_mod;
            let g = (&base * &base) % &self.p_mod;
            if !g.is_zero() && !g.is_one() {
                return g;
            }
            ctr += 1;
        }
    }

    pub fn element_bytes(&self, x: &BigUint) -> Vec<u8> {
        to_fixed_bytes(x, self.element_len())
    }

    pub fn scalar_bytes(&self, x: &BigUint) -> Vec<u8> {
        to_fixed_bytes(x, self.scalar_len())
    }
}

/// Residue `x mod m` of a signed integer.
pub fn signed_to_residue(x: i128, m: &BigUint) -> BigUint {
    let mag = BigUint::from(x.unsigned_abs()) % m;
    if x < 0 && !mag.is_zero() {
        m - mag
    } else {
        mag
    }
}

/// `gcd(a, b) == 1`.
pub fn coprime(a: &BigUint, b: &BigUint) -> bool {
    a.gcd(b).is_one()
}

pub(crate) mod hex_biguint {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&x.to_str_radix(16))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        BigUint::parse_bytes(s.as_bytes(), 16)
            .ok_or_else(|| serde::de::Error::custom("invalid hex integer"))
    }
}

pub(crate) mod hex_biguint_vec {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(xs: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<String> = xs.iter().map(|x| x.to_str_radix(16)).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigUint>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|s| {
                BigUint::parse_bytes(s.as_bytes(), 16)
                    .ok_or_else(|| serde::de::Error::custom("invalid hex integer"))
            })
            .collect()
    }
}
