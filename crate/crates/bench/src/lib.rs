// SPDX-License-Identifier: Apache-2.0

//! Shared fixtures for the benchmarks.

use verfu_core::codec::FixedPointSpec;
use verfu_core::protocol::{RoundPlan, Setup, World};
use verfu_core::ServerBehavior;

pub const SEED: &[u8] = b"bench";

/// Dealer output at `kappa` bits for both the modulus and the group.
pub fn setup(kappa: u64, dim: usize) -> Setup {
    let codec = FixedPointSpec::new(16, 4.0, 64).expect("codec");
    Setup::generate(kappa, kappa, dim, codec, SEED).expect("setup")
}

/// A world whose first round trains `cohort` devices and whose second
/// round unlearns device 0.
pub fn two_round_world(kappa: u64, dim: usize, cohort: u32) -> (World, [RoundPlan; 2]) {
    let world = World::new(setup(kappa, dim), SEED, cohort, vec![0.0; dim], cohort as u64, ServerBehavior::Honest);
    let ids: Vec<u32> = (0..cohort).collect();
    let plans = [
        RoundPlan { round: 1, cohort: ids.clone(), unlearners: vec![] },
        RoundPlan { round: 2, cohort: ids, unlearners: vec![0] },
    ];
    (world, plans)
}
