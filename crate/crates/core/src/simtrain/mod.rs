// SPDX-License-Identifier: Apache-2.0

//! Training workloads, campaign scheduling, and plaintext oracles.

pub mod campaign;
pub mod logistic;
pub mod oracle;
pub mod workload;

use thiserror::Error;

use crate::codec::CodecError;
use crate::protocol::ProtocolError;

pub use campaign::{plan_campaign, run_campaign, Campaign, CampaignRun, UtilityRow};
pub use logistic::{LogisticConfig, LogisticTask};
pub use oracle::{never_included_oracle, retrain_oracle};
pub use workload::{FrozenGradients, Workload};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid `{key}`: {reason}")]
    InvalidCampaign { key: &'static str, reason: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Tolerance for "recovered": within 0.1 percentage points.
pub const RECOVERY_TOLERANCE: f64 = 0.001;

/// Rounds needed after unlearning at index `unlearn_round` (with
/// `trajectory[t]` the accuracy after round `t`) until accuracy is back
/// within [`RECOVERY_TOLERANCE`] of `trajectory[unlearn_round - 1]`,
/// counting the unlearning round itself. `None` if it never recovers.
pub fn recovery_rounds(trajectory: &[f64], unlearn_round: usize) -> Option<usize> {
    if unlearn_round == 0 || unlearn_round >= trajectory.len() {
        return None;
    }
    let target = trajectory[unlearn_round - 1] - RECOVERY_TOLERANCE;
    trajectory[unlearn_round..].iter().position(|&a| a >= target).map(|k| k + 1)
}
