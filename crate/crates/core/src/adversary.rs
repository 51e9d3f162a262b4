// SPDX-License-Identifier: Apache-2.0

//! Malicious-server behaviors: aggregates that fail to remove an unlearner's
//! contribution and openings that do not match the board.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use rand::RngCore;
use thiserror::Error;

use crate::algebra::{mod_inv, random_range, signed_to_residue};
use crate::commitment::{encode_message, equivocate, Trapdoor};
use crate::lhh::LhhDigest;
use crate::paillier::{ct_add, encrypt_with_r, vec_scale, CiphertextVector, PaillierPublicKey};
use crate::protocol::messages::{Board, Flag, OpeningMsg, UploadMsg};
use crate::protocol::server::server_aggregate_unlearn;
use crate::protocol::{ProtocolError, ProtocolParams};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdversaryError {
    #[error("target device {0} is not an eligible member of the cohort")]
    TargetNotInCohort(u32),
    #[error("behavior needs the commitment trapdoor")]
    TrapdoorRequired,
    #[error("fraction {0}/{1} is not in (0, 1)")]
    InvalidFraction(u64, u64),
    #[error("coordinate {0} is outside the model dimension")]
    CoordinateOutOfRange(usize),
    #[error("cannot parse behavior {0:?}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Targets {
    AllUnlearners,
    Devices(Vec<u32>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpeningTarget {
    FirstUnlearner,
    Device(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substitute {
    /// A random digest: the opening still decommits, the hash check fails.
    Random,
    /// Skip the target's removal and open its commitment to the identity
    /// digest, which keeps the hash combination consistent with the forged
    /// aggregate.
    ConsistentWithSkip,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ServerBehavior {
    #[default]
    Honest,
    SkipUnlearn { targets: Targets },
    /// Removes `numerator/denominator` of each target's contribution by
    /// scaling its ciphertext with `numerator * denominator^-1 mod n`.
    PartialUnlearn { targets: Targets, numerator: u64, denominator: u64 },
    TamperAggregate { coordinate: usize, offset: i64 },
    ForgeOpening { target: OpeningTarget },
    EquivocateWithTrapdoor { target: OpeningTarget, substitute: Substitute },
}

impl ServerBehavior {
    pub fn is_honest(&self) -> bool {
        *self == ServerBehavior::Honest
    }

    /// Whether an active instance should be caught by at least one verifier.
    pub fn detectable(&self) -> bool {
        !matches!(
            self,
            ServerBehavior::Honest
                | ServerBehavior::EquivocateWithTrapdoor { substitute: Substitute::ConsistentWithSkip, .. }
        )
    }

    pub fn needs_trapdoor(&self) -> bool {
        matches!(self, ServerBehavior::EquivocateWithTrapdoor { .. })
    }

    /// Binds the behavior to one round. Returns `None` when it has nothing
    /// to act on: no unlearners this round, or none of its named targets
    /// present. The result names its targets explicitly.
    pub fn resolve(&self, cohort: &[u32], unlearners: &[u32], dim: usize) -> Result<Option<ServerBehavior>, AdversaryError> {
        if unlearners.is_empty() || self.is_honest() {
            return Ok(None);
        }
        let cohort: BTreeSet<u32> = cohort.iter().copied().collect();
        let unl: BTreeSet<u32> = unlearners.iter().copied().collect();
        let pick = |t: &Targets| -> Vec<u32> {
            match t {
                Targets::AllUnlearners => unl.iter().copied().collect(),
                Targets::Devices(ids) => ids.iter().copied().filter(|i| unl.contains(i)).collect(),
            }
        };
        let first = *unl.iter().next().expect("non-empty");
        let one = |t: &OpeningTarget, pool: &BTreeSet<u32>| match t {
            OpeningTarget::FirstUnlearner => Some(first),
            OpeningTarget::Device(id) => pool.contains(id).then_some(*id),
        };
        Ok(match self {
            ServerBehavior::Honest => None,
            ServerBehavior::SkipUnlearn { targets } => {
                let ids = pick(targets);
                (!ids.is_empty()).then_some(ServerBehavior::SkipUnlearn { targets: Targets::Devices(ids) })
            }
            ServerBehavior::PartialUnlearn { targets, numerator, denominator } => {
                check_fraction(*numerator, *denominator)?;
                let ids = pick(targets);
                (!ids.is_empty()).then_some(ServerBehavior::PartialUnlearn {
                    targets: Targets::Devices(ids),
                    numerator: *numerator,
                    denominator: *denominator,
                })
            }
            ServerBehavior::TamperAggregate { coordinate, .. } => {
                if *coordinate >= dim {
                    return Err(AdversaryError::CoordinateOutOfRange(*coordinate));
                }
                Some(self.clone())
            }
            ServerBehavior::ForgeOpening { target } => {
                one(target, &cohort).map(|id| ServerBehavior::ForgeOpening { target: OpeningTarget::Device(id) })
            }
            ServerBehavior::EquivocateWithTrapdoor { target, substitute } => {
                let pool = match substitute {
                    Substitute::Random => &cohort,
                    Substitute::ConsistentWithSkip => &unl,
                };
                one(target, pool).map(|id| ServerBehavior::EquivocateWithTrapdoor {
                    target: OpeningTarget::Device(id),
                    substitute: *substitute,
                })
            }
        })
    }
}

fn check_fraction(num: u64, den: u64) -> Result<(), AdversaryError> {
    if num == 0 || den == 0 || num >= den {
        return Err(AdversaryError::InvalidFraction(num, den));
    }
    Ok(())
}

fn explicit(targets: &Targets) -> &[u32] {
    match targets {
        Targets::Devices(ids) => ids,
        Targets::AllUnlearners => &[],
    }
}

fn explicit_one(t: &OpeningTarget) -> Option<u32> {
    match t {
        OpeningTarget::Device(id) => Some(*id),
        OpeningTarget::FirstUnlearner => None,
    }
}

/// Computes the server's aggregate under `behavior`. Targets must already be
/// explicit (see [`ServerBehavior::resolve`]).
pub fn corrupt_aggregate(
    behavior: &ServerBehavior,
    uploads: &[UploadMsg],
    pk: &PaillierPublicKey,
) -> Result<CiphertextVector, ProtocolError> {
    let unlearner = |id: u32| -> Result<usize, AdversaryError> {
        uploads
            .iter()
            .position(|u| u.device_id == id && u.flag == Flag::Unlearning)
            .ok_or(AdversaryError::TargetNotInCohort(id))
    };
    match behavior {
        ServerBehavior::Honest
        | ServerBehavior::ForgeOpening { .. }
        | ServerBehavior::EquivocateWithTrapdoor { substitute: Substitute::Random, .. } => {
            server_aggregate_unlearn(pk, uploads)
        }
        ServerBehavior::SkipUnlearn { targets } => {
            let skip = explicit(targets).iter().map(|&id| unlearner(id)).collect::<Result<BTreeSet<_>, _>>()?;
            let kept: Vec<UploadMsg> =
                uploads.iter().enumerate().filter(|(i, _)| !skip.contains(i)).map(|(_, u)| u.clone()).collect();
            if kept.is_empty() {
                return Ok(CiphertextVector { coords: vec![crate::paillier::Ciphertext(BigUint::from(1u32)); uploads[0].payload.len()] });
            }
            server_aggregate_unlearn(pk, &kept)
        }
        ServerBehavior::EquivocateWithTrapdoor { target, substitute: Substitute::ConsistentWithSkip } => {
            let targets = Targets::Devices(explicit_one(target).into_iter().collect());
            corrupt_aggregate(&ServerBehavior::SkipUnlearn { targets }, uploads, pk)
        }
        ServerBehavior::PartialUnlearn { targets, numerator, denominator } => {
            check_fraction(*numerator, *denominator)?;
            let k = (BigUint::from(*numerator) * mod_inv(&BigUint::from(*denominator), &pk.n)?) % &pk.n;
            let mut scaled = uploads.to_vec();
            for &id in explicit(targets) {
                let i = unlearner(id)?;
                scaled[i].payload = vec_scale(pk, &scaled[i].payload, &k);
            }
            server_aggregate_unlearn(pk, &scaled)
        }
        ServerBehavior::TamperAggregate { coordinate, offset } => {
            let mut agg = server_aggregate_unlearn(pk, uploads)?;
            let c = agg.coords.get_mut(*coordinate).ok_or(AdversaryError::CoordinateOutOfRange(*coordinate))?;
            let delta = encrypt_with_r(pk, &signed_to_residue(*offset as i128, &pk.n), &BigUint::from(1u32))?;
            *c = ct_add(pk, c, &delta);
            Ok(agg)
        }
    }
}

/// Rewrites the openings the server relays to verifiers. The board is
/// returned unchanged by every modeled behavior.
pub fn corrupt_openings<R: RngCore + ?Sized>(
    behavior: &ServerBehavior,
    params: &ProtocolParams,
    mut openings: Vec<OpeningMsg>,
    board: Board,
    td: Option<&Trapdoor>,
    rng: &mut R,
) -> Result<(Vec<OpeningMsg>, Board), ProtocolError> {
    let group = params.group();
    let random_digest = |rng: &mut R| {
        let e = random_range(&BigUint::from(1u32), &group.q_order, rng);
        LhhDigest(group.pow(&group.derive_generator(b"adversary"), &e))
    };
    let find = |openings: &[OpeningMsg], t: &OpeningTarget| -> Result<usize, AdversaryError> {
        let id = explicit_one(t).ok_or_else(|| AdversaryError::Parse("unresolved opening target".into()))?;
        openings.iter().position(|o| o.device_id == id).ok_or(AdversaryError::TargetNotInCohort(id))
    };
    match behavior {
        ServerBehavior::ForgeOpening { target } => {
            let i = find(&openings, target)?;
            openings[i].digest = random_digest(rng);
            openings[i].randomness = random_range(&BigUint::from(0u32), &group.q_order, rng);
        }
        ServerBehavior::EquivocateWithTrapdoor { target, substitute } => {
            let td = td.ok_or(AdversaryError::TrapdoorRequired)?;
            let i = find(&openings, target)?;
            let new_digest = match substitute {
                Substitute::Random => random_digest(rng),
                Substitute::ConsistentWithSkip => LhhDigest::identity(),
            };
            let old = encode_message(&params.com, &openings[i].digest);
            let new = encode_message(&params.com, &new_digest);
            openings[i].randomness = equivocate(&params.com, td, &old, &openings[i].randomness, &new)?;
            openings[i].digest = new_digest;
        }
        _ => {}
    }
    Ok((openings, board))
}

fn fmt_ids(ids: &[u32]) -> String {
    ids.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

fn parse_ids(s: &str) -> Option<Vec<u32>> {
    s.split(',').map(|x| x.trim().parse().ok()).collect()
}

impl fmt::Display for ServerBehavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let target = |t: &OpeningTarget| match t {
            OpeningTarget::FirstUnlearner => String::new(),
            OpeningTarget::Device(id) => format!(":{id}"),
        };
        match self {
            ServerBehavior::Honest => f.write_str("honest"),
            ServerBehavior::SkipUnlearn { targets: Targets::AllUnlearners } => f.write_str("skip_unlearn"),
            ServerBehavior::SkipUnlearn { targets: Targets::Devices(ids) } => write!(f, "skip_unlearn:{}", fmt_ids(ids)),
            ServerBehavior::PartialUnlearn { targets, numerator, denominator } => {
                write!(f, "partial_unlearn:{numerator}/{denominator}")?;
                match targets {
                    Targets::AllUnlearners => Ok(()),
                    Targets::Devices(ids) => write!(f, ":{}", fmt_ids(ids)),
                }
            }
            ServerBehavior::TamperAggregate { coordinate, offset } => write!(f, "tamper_aggregate:{coordinate}:{offset}"),
            ServerBehavior::ForgeOpening { target: t } => write!(f, "forge_opening{}", target(t)),
            ServerBehavior::EquivocateWithTrapdoor { target: t, substitute } => {
                let s = match substitute {
                    Substitute::Random => "random",
                    Substitute::ConsistentWithSkip => "consistent",
                };
                write!(f, "equivocate:{s}{}", target(t))
            }
        }
    }
}

impl FromStr for ServerBehavior {
    type Err = AdversaryError;

    /// `honest`, `skip_unlearn[:IDS]`, `partial_unlearn:N/D[:IDS]`,
    /// `tamper_aggregate:COORD:OFFSET`, `forge_opening[:ID]`,
    /// `equivocate[:random|consistent][:ID]`; `IDS` is comma-separated.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || AdversaryError::Parse(s.to_string());
        let parts: Vec<&str> = s.trim().split(':').collect();
        let targets = |p: Option<&&str>| match p {
            None => Some(Targets::AllUnlearners),
            Some(ids) => parse_ids(ids).map(Targets::Devices),
        };
        let one = |p: Option<&&str>| match p {
            None => Some(OpeningTarget::FirstUnlearner),
            Some(id) => id.parse().ok().map(OpeningTarget::Device),
        };
        let b = match parts.as_slice() {
            ["honest"] => ServerBehavior::Honest,
            ["skip_unlearn", rest @ ..] if rest.len() <= 1 => {
                ServerBehavior::SkipUnlearn { targets: targets(rest.first()).ok_or_else(err)? }
            }
            ["partial_unlearn", frac, rest @ ..] if rest.len() <= 1 => {
                let (n, d) = frac.split_once('/').ok_or_else(err)?;
                let numerator = n.parse().map_err(|_| err())?;
                let denominator = d.parse().map_err(|_| err())?;
                check_fraction(numerator, denominator)?;
                ServerBehavior::PartialUnlearn { targets: targets(rest.first()).ok_or_else(err)?, numerator, denominator }
            }
            ["tamper_aggregate", c, o] => ServerBehavior::TamperAggregate {
                coordinate: c.parse().map_err(|_| err())?,
                offset: o.parse().map_err(|_| err())?,
            },
            ["forge_opening", rest @ ..] if rest.len() <= 1 => {
                ServerBehavior::ForgeOpening { target: one(rest.first()).ok_or_else(err)? }
            }
            ["equivocate", rest @ ..] if rest.len() <= 2 => {
                let (substitute, id) = match rest.first() {
                    None | Some(&"random") => (Substitute::Random, rest.get(1)),
                    Some(&"consistent") => (Substitute::ConsistentWithSkip, rest.get(1)),
                    Some(_) if rest.len() == 1 => (Substitute::Random, rest.first()),
                    _ => return Err(err()),
                };
                ServerBehavior::EquivocateWithTrapdoor { target: one(id).ok_or_else(err)?, substitute }
            }
            _ => return Err(err()),
        };
        Ok(b)
    }
}
