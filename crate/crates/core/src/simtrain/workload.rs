// SPDX-License-Identifier: Apache-2.0

//! Local training workloads.

use std::collections::BTreeMap;

use rand::Rng;

use super::logistic::LogisticTask;
use crate::algebra::seeded_rng;

/// Model-independent gradients.
#[derive(Debug, Clone, PartialEq)]
pub enum FrozenGradients {
    /// Explicit `(round, device) -> v`; absent entries are zero.
    Scripted { dim: usize, table: BTreeMap<(u64, u32), Vec<f64>> },
    /// Uniform in `[-amplitude, amplitude]`, derived from `(seed, round, device)`.
    Seeded { dim: usize, amplitude: f64, seed: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Workload {
    Frozen(FrozenGradients),
    Logistic(Box<LogisticTask>),
    /// Per-device loss `0.5 * |w - c_i|^2`.
    Quadratic { centers: Vec<Vec<f64>> },
}

impl Workload {
    pub fn dim(&self) -> usize {
        match self {
            Workload::Frozen(FrozenGradients::Scripted { dim, .. } | FrozenGradients::Seeded { dim, .. }) => *dim,
            Workload::Logistic(t) => t.dim(),
            Workload::Quadratic { centers } => centers.first().map_or(0, Vec::len),
        }
    }

    pub fn is_frozen(&self) -> bool {
        matches!(self, Workload::Frozen(_))
    }

    /// Local update `v = w_local - w` for `device` in `round`.
    pub fn local_train(&self, device: u32, round: u64, w: &[f64], epochs: u32, lr: f64) -> Vec<f64> {
        match self {
            Workload::Frozen(FrozenGradients::Scripted { dim, table }) => {
                table.get(&(round, device)).cloned().unwrap_or_else(|| vec![0.0; *dim])
            }
            Workload::Frozen(FrozenGradients::Seeded { dim, amplitude, seed }) => {
                let mut rng = seeded_rng(&[b"frozen", seed, &round.to_be_bytes(), &device.to_be_bytes()]);
                (0..*dim).map(|_| rng.random_range(-*amplitude..=*amplitude)).collect()
            }
            Workload::Logistic(t) => t.local_train(device, w, epochs, lr),
            Workload::Quadratic { centers } => {
                let c = &centers[device as usize];
                let mut local = w.to_vec();
                for _ in 0..epochs {
                    for (p, ci) in local.iter_mut().zip(c) {
                        *p -= lr * (*p - ci);
                    }
                }
                local.iter().zip(w).map(|(a, b)| a - b).collect()
            }
        }
    }

    /// `(accuracy, loss)` where the workload defines them.
    pub fn evaluate(&self, w: &[f64]) -> Option<(f64, f64)> {
        match self {
            Workload::Logistic(t) => Some(t.evaluate(w)),
            _ => None,
        }
    }
}
