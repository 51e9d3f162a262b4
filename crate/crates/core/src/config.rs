// SPDX-License-Identifier: Apache-2.0

//! Campaign configuration files.

use num_bigint::BigUint;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::ServerBehavior;
use crate::algebra::seeded_rng;
use crate::codec::FixedPointSpec;
use crate::protocol::{EngineOptions, ProtocolError, Setup, World};
use crate::simtrain::{
    plan_campaign, run_campaign, Campaign, CampaignRun, FrozenGradients, LogisticConfig, LogisticTask, SimError,
    Workload,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadConfig {
    /// Seeded model-independent gradients.
    Frozen { dim: usize, amplitude: f64 },
    Logistic {
        features: usize,
        classes: usize,
        #[serde(default = "default_samples")]
        samples_per_device: usize,
        #[serde(default = "default_test")]
        test_samples: usize,
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default = "one")]
        separation: f64,
        #[serde(default = "one")]
        noise: f64,
    },
    /// Per-device quadratic loss around seeded centers.
    Quadratic { dim: usize, spread: f64 },
}

fn default_samples() -> usize {
    20
}

fn default_test() -> usize {
    1000
}

fn one() -> f64 {
    1.0
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig::Logistic {
            features: 8,
            classes: 3,
            samples_per_device: default_samples(),
            test_samples: default_test(),
            alpha: 1.0,
            separation: 1.0,
            noise: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub devices: u32,
    pub rounds: u64,
    pub cohort: u32,
    pub unlearn_rate: f64,
    pub cadence: u64,
    pub epochs: u32,
    pub lr: f64,
    pub scale_bits: u32,
    pub bound: f64,
    pub kappa_paillier: u64,
    pub kappa_group: u64,
    pub seed: u64,
    pub behavior: String,
    pub strict: bool,
    pub workload: WorkloadConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let c = Campaign::default();
        Self {
            devices: c.devices,
            rounds: c.rounds,
            cohort: c.cohort,
            unlearn_rate: 0.1,
            cadence: c.cadence,
            epochs: c.epochs,
            lr: c.lr,
            scale_bits: 24,
            bound: 4.0,
            kappa_paillier: 256,
            kappa_group: 256,
            seed: 0,
            behavior: "honest".into(),
            strict: false,
            workload: WorkloadConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let c: RunConfig = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn campaign(&self) -> Campaign {
        Campaign {
            devices: self.devices,
            rounds: self.rounds,
            cohort: self.cohort,
            unlearn_rate: self.unlearn_rate,
            cadence: self.cadence,
            epochs: self.epochs,
            lr: self.lr,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.workload {
            WorkloadConfig::Frozen { dim, .. } | WorkloadConfig::Quadratic { dim, .. } => *dim,
            WorkloadConfig::Logistic { features, classes, .. } => classes * (features + 1),
        }
    }

    pub fn codec(&self) -> Result<FixedPointSpec, ConfigError> {
        FixedPointSpec::new(self.scale_bits, self.bound, self.campaign().max_terms())
            .map_err(|e| invalid("scale_bits", e.to_string()))
    }

    pub fn parsed_behavior(&self) -> Result<ServerBehavior, ConfigError> {
        self.behavior.parse().map_err(|e: crate::adversary::AdversaryError| invalid("behavior", e.to_string()))
    }

    pub fn seed_bytes(&self) -> [u8; 8] {
        self.seed.to_be_bytes()
    }

    /// Checks every key before any key generation runs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.campaign().validate().map_err(|e| match e {
            SimError::InvalidCampaign { key, reason } => invalid(key, reason),
            other => invalid("campaign", other.to_string()),
        })?;
        if self.kappa_paillier < 64 {
            return Err(invalid("kappa_paillier", "must be at least 64"));
        }
        if self.kappa_group < 16 || (self.kappa_group > 1024 && self.kappa_group != 2048) {
            return Err(invalid("kappa_group", "must be in 16..=1024, or 2048 for the fixed group"));
        }
        let codec = self.codec()?;
        let need = BigUint::from(codec.max_terms) * BigUint::from(codec.max_coord() as u128 + 1) * 2u32;
        if need.bits() >= self.kappa_paillier {
            return Err(invalid("kappa_paillier", format!("too small for sums of {} bits", need.bits())));
        }
        if need.bits() + 1 >= self.kappa_group {
            return Err(invalid("kappa_group", format!("too small for sums of {} bits", need.bits())));
        }
        self.parsed_behavior()?;
        match &self.workload {
            WorkloadConfig::Frozen { dim, amplitude } => {
                if *dim == 0 {
                    return Err(invalid("workload.dim", "must be at least 1"));
                }
                if !(*amplitude >= 0.0 && *amplitude <= self.bound) {
                    return Err(invalid("workload.amplitude", "must be in [0, bound]"));
                }
            }
            WorkloadConfig::Quadratic { dim, spread } => {
                if *dim == 0 {
                    return Err(invalid("workload.dim", "must be at least 1"));
                }
                if !(spread.is_finite() && *spread >= 0.0) {
                    return Err(invalid("workload.spread", "must be finite and non-negative"));
                }
            }
            WorkloadConfig::Logistic { features, classes, samples_per_device, alpha, separation, noise, .. } => {
                if *features == 0 {
                    return Err(invalid("workload.features", "must be at least 1"));
                }
                if *classes < 2 {
                    return Err(invalid("workload.classes", "must be at least 2"));
                }
                if *samples_per_device == 0 {
                    return Err(invalid("workload.samples_per_device", "must be at least 1"));
                }
                for (k, v) in [("workload.alpha", alpha), ("workload.separation", separation), ("workload.noise", noise)] {
                    if !(v.is_finite() && *v > 0.0) {
                        return Err(invalid(k, "must be positive"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn build_workload(&self) -> Workload {
        let seed = self.seed_bytes();
        match &self.workload {
            WorkloadConfig::Frozen { dim, amplitude } => {
                Workload::Frozen(FrozenGradients::Seeded { dim: *dim, amplitude: *amplitude, seed: seed.to_vec() })
            }
            WorkloadConfig::Quadratic { dim, spread } => {
                let mut rng = seeded_rng(&[b"quadratic", &seed]);
                let normal = Normal::new(0.0, spread.max(f64::MIN_POSITIVE)).expect("spread");
                let centers = (0..self.devices).map(|_| (0..*dim).map(|_| normal.sample(&mut rng)).collect()).collect();
                Workload::Quadratic { centers }
            }
            WorkloadConfig::Logistic { features, classes, samples_per_device, test_samples, alpha, separation, noise } => {
                let cfg = LogisticConfig {
                    features: *features,
                    classes: *classes,
                    devices: self.devices,
                    samples_per_device: *samples_per_device,
                    test_samples: *test_samples,
                    alpha: *alpha,
                    separation: *separation,
                    noise: *noise,
                };
                Workload::Logistic(Box::new(LogisticTask::generate(cfg, &seed)))
            }
        }
    }

    /// Fresh dealer output for this configuration.
    pub fn setup(&self) -> Result<Setup, ProtocolError> {
        let codec = self.codec().map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        Setup::generate(self.kappa_paillier, self.kappa_group, self.dim(), codec, &self.seed_bytes())
    }

    /// Plans and runs the whole campaign on `setup`.
    pub fn execute(&self, setup: Setup) -> Result<CampaignRun, SimError> {
        let campaign = self.campaign();
        let behavior = self.parsed_behavior().map_err(|e| SimError::InvalidCampaign { key: "behavior", reason: e.to_string() })?;
        let plans = plan_campaign(&campaign, &self.seed_bytes())?;
        let workload = self.build_workload();
        let world = World::new(
            setup,
            &self.seed_bytes(),
            self.devices,
            vec![0.0; self.dim()],
            self.cohort as u64,
            behavior,
        );
        run_campaign(world, &campaign, &plans, &workload, &EngineOptions { strict: self.strict })
    }
}
