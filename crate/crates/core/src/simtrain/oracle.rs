// SPDX-License-Identifier: Apache-2.0

//! Plaintext integer references for the model state under frozen gradients.

use std::collections::{BTreeMap, BTreeSet};

use super::campaign::Campaign;
use super::workload::Workload;
use super::SimError;
use crate::codec::{encode, EncodedVector, FixedPointSpec};
use crate::protocol::RoundPlan;

fn frozen_gradient(
    workload: &Workload,
    c: &Campaign,
    spec: &FixedPointSpec,
    id: u32,
    round: u64,
) -> Result<EncodedVector, SimError> {
    let zeros = vec![0.0; workload.dim()];
    Ok(encode(&workload.local_train(id, round, &zeros, c.epochs, c.lr), spec)?)
}

fn require_frozen(workload: &Workload) -> Result<(), SimError> {
    if !workload.is_frozen() {
        return Err(SimError::InvalidCampaign { key: "workload", reason: "oracles need frozen gradients".into() });
    }
    Ok(())
}

/// Round-by-round recursion: each round adds the normal gradients and
/// subtracts every unlearner's running contribution sum. Returns the
/// integer model accumulator after each round.
pub fn retrain_oracle(
    plans: &[RoundPlan],
    workload: &Workload,
    c: &Campaign,
    spec: &FixedPointSpec,
) -> Result<Vec<EncodedVector>, SimError> {
    require_frozen(workload)?;
    let dim = workload.dim();
    let mut cv: BTreeMap<u32, EncodedVector> = BTreeMap::new();
    let mut acc = EncodedVector::zeros(dim);
    let mut out = Vec::with_capacity(plans.len());
    for p in plans {
        let unl: BTreeSet<u32> = p.unlearners.iter().copied().collect();
        for &id in &p.cohort {
            if unl.contains(&id) {
                acc.sub_assign(cv.get(&id).unwrap_or(&EncodedVector::zeros(dim)));
            } else {
                let v = frozen_gradient(workload, c, spec, id, p.round)?;
                acc.add_assign(&v);
                cv.entry(id).or_insert_with(|| EncodedVector::zeros(dim)).add_assign(&v);
            }
        }
        out.push(acc.clone());
    }
    Ok(out)
}

/// Direct sum over every gradient whose author has not left by the end of
/// each round, as if departed devices had never been included.
pub fn never_included_oracle(
    plans: &[RoundPlan],
    workload: &Workload,
    c: &Campaign,
    spec: &FixedPointSpec,
) -> Result<Vec<EncodedVector>, SimError> {
    require_frozen(workload)?;
    let dim = workload.dim();
    let mut out = Vec::with_capacity(plans.len());
    for t in 0..plans.len() {
        let gone: BTreeSet<u32> = plans[..=t].iter().flat_map(|p| p.unlearners.iter().copied()).collect();
        let mut acc = EncodedVector::zeros(dim);
        for p in &plans[..=t] {
            for &id in p.cohort.iter().filter(|id| !gone.contains(id)) {
                acc.add_assign(&frozen_gradient(workload, c, spec, id, p.round)?);
            }
        }
        out.push(acc);
    }
    Ok(out)
}
