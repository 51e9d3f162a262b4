// SPDX-License-Identifier: Apache-2.0

//! Protocol messages and their fixed-width wire encodings.
//!
//! Widths: `E` bytes per group element, `S` per exponent, `C` per Paillier
//! ciphertext. Device ids and counts are big-endian `u32`.
//!
//! | message    | layout                                        |
//! |------------|-----------------------------------------------|
//! | prepare    | commitment (E)                                |
//! | board      | count, count x (id, commitment)               |
//! | upload     | flag (1), d x ciphertext (C)                  |
//! | aggregate  | d, d x ciphertext, count, count x (id, flag)  |
//! | opening    | digest (E), randomness (S)                    |
//! | openings   | count, count x (id, digest, randomness)       |
//! | verdict    | decommit ok (1), unlearning ok (1)            |

use std::collections::BTreeMap;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::{ProtocolError, ProtocolParams, Role};
use crate::algebra::from_fixed_bytes;
use crate::commitment::Commitment;
use crate::lhh::LhhDigest;
use crate::paillier::{Ciphertext, CiphertextVector};
use crate::protocol::verify::Verdict;

/// Status indicator: `+1` for a normal upload, `-1` for an unlearning request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flag {
    Normal,
    Unlearning,
}

impl Flag {
    pub fn coefficient(self) -> i64 {
        match self {
            Flag::Normal => 1,
            Flag::Unlearning => -1,
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Flag::Normal => 0x01,
            Flag::Unlearning => 0xff,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self, ProtocolError> {
        match b {
            0x01 => Ok(Flag::Normal),
            0xff => Ok(Flag::Unlearning),
            other => Err(ProtocolError::Malformed(format!("flag byte {other:#04x}"))),
        }
    }
}

impl From<Role> for Flag {
    fn from(r: Role) -> Self {
        match r {
            Role::Normal => Flag::Normal,
            Role::Unlearning => Flag::Unlearning,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrepareMsg {
    pub device_id: u32,
    pub commitment: Commitment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UploadMsg {
    pub device_id: u32,
    pub payload: CiphertextVector,
    pub flag: Flag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpeningMsg {
    pub device_id: u32,
    pub digest: LhhDigest,
    pub randomness: BigUint,
}

/// The commitment board `{(i, m_i)}` the server broadcasts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Board(pub BTreeMap<u32, Commitment>);

/// The encrypted aggregate together with every cohort member's flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregateBroadcast {
    pub aggregate: CiphertextVector,
    pub flags: BTreeMap<u32, Flag>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if self.pos + n > self.buf.len() {
            return Err(ProtocolError::Malformed(format!(
                "truncated: need {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ProtocolError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn finish(self) -> Result<(), ProtocolError> {
        if self.pos != self.buf.len() {
            return Err(ProtocolError::Malformed(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn count(n: usize) -> [u8; 4] {
    u32::try_from(n).expect("count fits u32").to_be_bytes()
}

impl ProtocolParams {
    fn element(&self, r: &mut Reader<'_>) -> Result<BigUint, ProtocolError> {
        let w = self.group().element_len();
        Ok(from_fixed_bytes(r.take(w)?, w)?)
    }

    fn scalar(&self, r: &mut Reader<'_>) -> Result<BigUint, ProtocolError> {
        let w = self.group().scalar_len();
        Ok(from_fixed_bytes(r.take(w)?, w)?)
    }

    fn ciphertexts(&self, r: &mut Reader<'_>, d: usize) -> Result<CiphertextVector, ProtocolError> {
        let w = self.pk.ciphertext_len();
        let coords = (0..d)
            .map(|_| Ok(Ciphertext::from_bytes(r.take(w)?, &self.pk)?))
            .collect::<Result<_, ProtocolError>>()?;
        Ok(CiphertextVector { coords })
    }

    pub fn prepare_len(&self) -> usize {
        self.com.commitment_len()
    }

    pub fn opening_len(&self) -> usize {
        self.group().element_len() + self.group().scalar_len()
    }

    pub fn upload_len(&self) -> usize {
        1 + self.dim() * self.pk.ciphertext_len()
    }

    pub fn encode_prepare(&self, m: &PrepareMsg) -> Vec<u8> {
        m.commitment.to_bytes(&self.com)
    }

    pub fn decode_prepare(&self, device_id: u32, bytes: &[u8]) -> Result<PrepareMsg, ProtocolError> {
        let mut r = Reader::new(bytes);
        let commitment = Commitment(self.element(&mut r)?);
        r.finish()?;
        Ok(PrepareMsg { device_id, commitment })
    }

    pub fn encode_board(&self, b: &Board) -> Vec<u8> {
        let mut out = count(b.0.len()).to_vec();
        for (id, c) in &b.0 {
            out.extend_from_slice(&id.to_be_bytes());
            out.extend(c.to_bytes(&self.com));
        }
        out
    }

    pub fn decode_board(&self, bytes: &[u8]) -> Result<Board, ProtocolError> {
        let mut r = Reader::new(bytes);
        let n = r.u32()?;
        let mut entries = BTreeMap::new();
        for _ in 0..n {
            let id = r.u32()?;
            let c = Commitment(self.element(&mut r)?);
            if entries.insert(id, c).is_some() {
                return Err(ProtocolError::DuplicateDevice(id));
            }
        }
        r.finish()?;
        Ok(Board(entries))
    }

    pub fn encode_upload(&self, m: &UploadMsg) -> Vec<u8> {
        let mut out = vec![m.flag.to_byte()];
        out.extend(m.payload.to_bytes(&self.pk));
        out
    }

    pub fn decode_upload(&self, device_id: u32, bytes: &[u8]) -> Result<UploadMsg, ProtocolError> {
        let mut r = Reader::new(bytes);
        let flag = Flag::from_byte(r.take(1)?[0])?;
        let payload = self.ciphertexts(&mut r, self.dim())?;
        r.finish()?;
        Ok(UploadMsg { device_id, payload, flag })
    }

    pub fn encode_aggregate(&self, m: &AggregateBroadcast) -> Vec<u8> {
        let mut out = count(m.aggregate.len()).to_vec();
        out.extend(m.aggregate.to_bytes(&self.pk));
        out.extend(count(m.flags.len()));
        for (id, f) in &m.flags {
            out.extend_from_slice(&id.to_be_bytes());
            out.push(f.to_byte());
        }
        out
    }

    pub fn decode_aggregate(&self, bytes: &[u8]) -> Result<AggregateBroadcast, ProtocolError> {
        let mut r = Reader::new(bytes);
        let d = r.u32()? as usize;
        if d != self.dim() {
            return Err(ProtocolError::LengthMismatch(d, self.dim()));
        }
        let aggregate = self.ciphertexts(&mut r, d)?;
        let n = r.u32()?;
        let mut flags = BTreeMap::new();
        for _ in 0..n {
            let id = r.u32()?;
            let f = Flag::from_byte(r.take(1)?[0])?;
            if flags.insert(id, f).is_some() {
                return Err(ProtocolError::DuplicateDevice(id));
            }
        }
        r.finish()?;
        Ok(AggregateBroadcast { aggregate, flags })
    }

    pub fn encode_opening(&self, m: &OpeningMsg) -> Vec<u8> {
        let mut out = m.digest.to_bytes(self.group());
        out.extend(self.group().scalar_bytes(&m.randomness));
        out
    }

    pub fn decode_opening(&self, device_id: u32, bytes: &[u8]) -> Result<OpeningMsg, ProtocolError> {
        let mut r = Reader::new(bytes);
        let digest = LhhDigest(self.element(&mut r)?);
        let randomness = self.scalar(&mut r)?;
        r.finish()?;
        Ok(OpeningMsg { device_id, digest, randomness })
    }

    pub fn encode_openings(&self, ms: &[OpeningMsg]) -> Vec<u8> {
        let mut out = count(ms.len()).to_vec();
        for m in ms {
            out.extend_from_slice(&m.device_id.to_be_bytes());
            out.extend(self.encode_opening(m));
        }
        out
    }

    pub fn decode_openings(&self, bytes: &[u8]) -> Result<Vec<OpeningMsg>, ProtocolError> {
        let mut r = Reader::new(bytes);
        let n = r.u32()?;
        let mut out = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let device_id = r.u32()?;
            let digest = LhhDigest(self.element(&mut r)?);
            let randomness = self.scalar(&mut r)?;
            out.push(OpeningMsg { device_id, digest, randomness });
        }
        r.finish()?;
        Ok(out)
    }

    pub fn encode_verdict(&self, v: &Verdict) -> Vec<u8> {
        vec![v.decommit_ok as u8, v.unlearning_ok as u8]
    }

    pub fn decode_verdict(&self, bytes: &[u8]) -> Result<Verdict, ProtocolError> {
        match bytes {
            [a @ (0 | 1), b @ (0 | 1)] => Ok(Verdict { decommit_ok: *a == 1, unlearning_ok: *b == 1 }),
            _ => Err(ProtocolError::Malformed(format!("verdict bytes {bytes:02x?}"))),
        }
    }
}
