// SPDX-License-Identifier: Apache-2.0

//! Campaign schedules and the multi-round driver.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::workload::Workload;
use super::SimError;
use crate::algebra::seeded_rng;
use crate::protocol::engine::RoundResult;
use crate::protocol::{run_round, EngineOptions, Role, RoundPlan, RoundTranscript, World};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub devices: u32,
    pub rounds: u64,
    pub cohort: u32,
    /// Fraction of all devices that leave over the campaign.
    pub unlearn_rate: f64,
    /// Unlearning requests are served in rounds divisible by `cadence`.
    pub cadence: u64,
    pub epochs: u32,
    pub lr: f64,
}

impl Default for Campaign {
    fn default() -> Self {
        Self { devices: 500, rounds: 100, cohort: 20, unlearn_rate: 0.0, cadence: 5, epochs: 5, lr: 0.01 }
    }
}

fn invalid(key: &'static str, reason: impl Into<String>) -> SimError {
    SimError::InvalidCampaign { key, reason: reason.into() }
}

impl Campaign {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.devices == 0 {
            return Err(invalid("devices", "must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be at least 1"));
        }
        if self.cohort == 0 || self.cohort > self.devices {
            return Err(invalid("cohort", format!("must be in 1..={}", self.devices)));
        }
        if !(0.0..=1.0).contains(&self.unlearn_rate) {
            return Err(invalid("unlearn_rate", "must be in [0, 1]"));
        }
        if self.cadence == 0 {
            return Err(invalid("cadence", "must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(invalid("lr", "must be finite and non-negative"));
        }
        let total = self.total_unlearners();
        let slots = self.unlearning_rounds().len() as u64;
        if total > 0 && slots == 0 {
            return Err(invalid("cadence", "no unlearning round falls inside the campaign"));
        }
        if total > 0 && total.div_ceil(slots) > self.cohort as u64 {
            return Err(invalid("unlearn_rate", "more unlearners per round than cohort slots"));
        }
        if self.devices as u64 - total < self.cohort as u64 {
            return Err(invalid("unlearn_rate", "too few devices remain to fill the cohort"));
        }
        Ok(())
    }

    pub fn total_unlearners(&self) -> u64 {
        (self.unlearn_rate * self.devices as f64).round() as u64
    }

    pub fn unlearning_rounds(&self) -> Vec<u64> {
        (1..=self.rounds).filter(|r| r % self.cadence == 0).collect()
    }

    /// Upper bound on terms in any aggregate: every unlearner's `cv` spans at
    /// most `rounds` gradients.
    pub fn max_terms(&self) -> u64 {
        self.cohort as u64 * (self.rounds + 1)
    }
}

/// Fixed-size random cohorts for rounds `1..=rounds`. Unlearners are spread
/// evenly over the unlearning rounds, preferring devices that already
/// contributed, and never appear again once scheduled.
pub fn plan_campaign(c: &Campaign, seed: &[u8]) -> Result<Vec<RoundPlan>, SimError> {
    c.validate()?;
    let mut rng = seeded_rng(&[b"plan", seed]);
    let slots = c.unlearning_rounds();
    let total = c.total_unlearners();
    let per_round: BTreeMap<u64, u64> = slots
        .iter()
        .enumerate()
        .map(|(i, &r)| (r, total / slots.len() as u64 + u64::from((i as u64) < total % slots.len().max(1) as u64)))
        .collect();

    let mut history: BTreeSet<u32> = BTreeSet::new();
    let mut gone: BTreeSet<u32> = BTreeSet::new();
    let mut plans = Vec::with_capacity(c.rounds as usize);
    for round in 1..=c.rounds {
        let k = per_round.get(&round).copied().unwrap_or(0) as usize;
        let (mut seasoned, mut fresh): (Vec<u32>, Vec<u32>) =
            (0..c.devices).filter(|id| !gone.contains(id)).partition(|id| history.contains(id));
        if seasoned.len() + fresh.len() < c.cohort as usize {
            return Err(invalid("devices", format!("round {round} has too few active devices")));
        }
        seasoned.shuffle(&mut rng);
        fresh.shuffle(&mut rng);
        let mut pool: Vec<u32> = seasoned.into_iter().chain(fresh).collect();
        let unlearners: Vec<u32> = pool.drain(..k).collect();
        pool.shuffle(&mut rng);
        let normals: Vec<u32> = pool.into_iter().take(c.cohort as usize - k).collect();

        history.extend(&normals);
        gone.extend(&unlearners);
        let mut cohort: Vec<u32> = normals.into_iter().chain(unlearners.iter().copied()).collect();
        cohort.sort_unstable();
        let mut unlearners = unlearners;
        unlearners.sort_unstable();
        plans.push(RoundPlan { round, cohort, unlearners });
    }
    Ok(plans)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilityRow {
    pub unlearn_rate: f64,
    pub round: u64,
    pub accuracy: Option<f64>,
    pub loss: Option<f64>,
    pub exited: usize,
    pub verified: bool,
}

#[derive(Debug, Clone)]
pub struct CampaignRun {
    /// Plans as executed, after moving pending unlearners in.
    pub plans: Vec<RoundPlan>,
    pub results: Vec<RoundResult>,
    pub transcripts: Vec<RoundTranscript>,
    /// Row 0 describes the initial model.
    pub utility: Vec<UtilityRow>,
    pub world: World,
}

impl CampaignRun {
    pub fn all_verified(&self) -> bool {
        self.results.iter().all(RoundResult::all_verified)
    }

    pub fn failed_rounds(&self) -> Vec<u64> {
        self.results.iter().filter(|r| !r.all_verified()).map(|r| r.round).collect()
    }

    pub fn accuracy(&self) -> Vec<f64> {
        self.utility.iter().map(|u| u.accuracy.unwrap_or(f64::NAN)).collect()
    }
}

/// Unlearners whose verification failed stay pending and are moved into the
/// next cohort in place of its highest-numbered normal members.
fn with_pending(world: &World, plan: &RoundPlan) -> RoundPlan {
    let pending: Vec<u32> = world
        .devices
        .values()
        .filter(|d| d.role == Role::Unlearning && !world.exited.contains_key(&d.id))
        .map(|d| d.id)
        .collect();
    let mut plan = plan.clone();
    for id in pending {
        if plan.unlearners.contains(&id) {
            continue;
        }
        if !plan.cohort.contains(&id) {
            let victim = plan.cohort.iter().rev().copied().find(|c| !plan.unlearners.contains(c));
            match victim {
                Some(v) => plan.cohort.retain(|&c| c != v),
                None => continue,
            }
            plan.cohort.push(id);
        }
        plan.unlearners.push(id);
    }
    plan.cohort.sort_unstable();
    plan.unlearners.sort_unstable();
    plan
}

pub fn run_campaign(
    mut world: World,
    campaign: &Campaign,
    plans: &[RoundPlan],
    workload: &Workload,
    opts: &EngineOptions,
) -> Result<CampaignRun, SimError> {
    let row = |world: &World, round: u64, verified: bool| {
        let eval = workload.evaluate(&world.weights());
        UtilityRow {
            unlearn_rate: campaign.unlearn_rate,
            round,
            accuracy: eval.map(|e| e.0),
            loss: eval.map(|e| e.1),
            exited: world.exited.len(),
            verified,
        }
    };
    let mut run = CampaignRun {
        plans: Vec::with_capacity(plans.len()),
        results: Vec::with_capacity(plans.len()),
        transcripts: Vec::with_capacity(plans.len()),
        utility: vec![row(&world, 0, true)],
        world: world.clone(),
    };
    for plan in plans {
        let plan = with_pending(&world, plan);
        let w = world.weights();
        let gradients: BTreeMap<u32, Vec<f64>> = plan
            .cohort
            .iter()
            .filter(|id| !plan.unlearners.contains(id))
            .map(|&id| (id, workload.local_train(id, plan.round, &w, campaign.epochs, campaign.lr)))
            .collect();
        let (result, transcript) = run_round(&mut world, &plan, &gradients, opts)?;
        run.utility.push(row(&world, plan.round, result.all_verified()));
        run.plans.push(plan);
        run.results.push(result);
        run.transcripts.push(transcript);
    }
    run.world = world;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Campaign {
        Campaign { devices: 40, rounds: 10, cohort: 5, unlearn_rate: 0.2, cadence: 2, ..Default::default() }
    }

    #[test]
    fn plans_have_constant_cohort_and_exit_once() {
        let c = small();
        let plans = plan_campaign(&c, b"p").unwrap();
        assert_eq!(plans.len(), 10);
        let mut gone = BTreeSet::new();
        let mut total = 0;
        for p in &plans {
            assert_eq!(p.cohort.len(), 5);
            assert!(p.cohort.iter().all(|id| !gone.contains(id)));
            assert!(p.unlearners.iter().all(|id| p.cohort.contains(id)));
            if p.round % 2 != 0 {
                assert!(p.unlearners.is_empty());
            }
            total += p.unlearners.len();
            gone.extend(p.unlearners.iter().copied());
        }
        assert_eq!(total, 8);
        assert_eq!(plans, plan_campaign(&c, b"p").unwrap());
        assert_ne!(plans, plan_campaign(&c, b"q").unwrap());
    }

    #[test]
    fn unlearners_prefer_devices_with_history() {
        let c = Campaign { devices: 100, rounds: 6, cohort: 10, unlearn_rate: 0.05, cadence: 3, ..Default::default() };
        let plans = plan_campaign(&c, b"h").unwrap();
        let mut seen = BTreeSet::new();
        for p in &plans {
            for u in &p.unlearners {
                assert!(seen.contains(u), "unlearner {u} in round {} has no history", p.round);
            }
            seen.extend(p.cohort.iter().filter(|id| !p.unlearners.contains(id)).copied());
        }
    }

    #[test]
    fn validation_names_the_key() {
        let bad = |c: Campaign| match c.validate() {
            Err(SimError::InvalidCampaign { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        assert_eq!(bad(Campaign { cohort: 0, ..small() }), "cohort");
        assert_eq!(bad(Campaign { unlearn_rate: 1.5, ..small() }), "unlearn_rate");
        assert_eq!(bad(Campaign { cadence: 0, ..small() }), "cadence");
        assert_eq!(bad(Campaign { cadence: 20, ..small() }), "cadence");
        assert_eq!(bad(Campaign { unlearn_rate: 0.9, ..small() }), "unlearn_rate");
        assert_eq!(bad(Campaign { lr: f64::NAN, ..small() }), "lr");
        assert!(Campaign::default().validate().is_ok());
    }
}
