// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! Run configuration: one JSON document, every field optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentConfig, Algorithm};
use crate::dynamics::{DeviceParams, Gate, PulseSet};
use crate::ensemble::NoiseConfig;
use crate::env::{EnvConfig, EnvMode, EnvSettings};
use crate::error::{Error, Result};
use crate::eval::{DEFAULT_SWEEP_LEVELS, EXTENDED_SWEEP_LEVELS};
use crate::grape::GrapeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub total_steps: usize,
    pub checkpoint_every: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            total_steps: 100_000,
            checkpoint_every: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    /// Devices per ensemble.
    pub m: usize,
    /// Held-out master seed for evaluation devices; must differ from `seed`.
    pub seed: u64,
    pub sweep_levels: Vec<f64>,
    pub extended_sweep_levels: Vec<f64>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            m: 100,
            seed: 1_000_003,
            sweep_levels: DEFAULT_SWEEP_LEVELS.to_vec(),
            extended_sweep_levels: EXTENDED_SWEEP_LEVELS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSettings {
    pub count: usize,
    pub bins: usize,
}

impl Default for SampleSettings {
    fn default() -> Self {
        Self {
            count: 100_000,
            bins: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed. [`RunConfig::resolve`] copies it into the GRAPE, noise
    /// and agent seeds.
    pub seed: u64,
    pub gate: Gate,
    pub nominal: DeviceParams,
    pub grape: GrapeConfig,
    pub grape_restarts: usize,
    pub noise: NoiseConfig,
    pub env: EnvSettings,
    /// Agent template; algorithm, action and observation sizes are set per run.
    pub agent: AgentConfig,
    pub train: TrainSettings,
    pub eval: EvalSettings,
    pub samples: SampleSettings,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            gate: Gate::Cz3,
            nominal: DeviceParams::default(),
            grape: GrapeConfig::default(),
            grape_restarts: 3,
            noise: NoiseConfig::default(),
            env: EnvSettings::default(),
            agent: AgentConfig::default(),
            train: TrainSettings::default(),
            eval: EvalSettings::default(),
            samples: SampleSettings::default(),
            output_dir: "runs".into(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Propagates the master seed and checks every section.
    pub fn resolve(mut self) -> Result<Self> {
        self.grape.seed = self.seed;
        self.noise.seed = self.seed;
        self.agent.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.nominal.validate()?;
        self.grape.validate()?;
        self.noise.validate()?;
        if self.grape_restarts == 0 {
            return Err(Error::InvalidParameter("grape_restarts must be >= 1".into()));
        }
        if self.eval.m == 0 || self.samples.count == 0 || self.samples.bins == 0 {
            return Err(Error::InvalidParameter("eval.m, samples.count and samples.bins must be >= 1".into()));
        }
        if self.eval.seed == self.seed {
            return Err(Error::InvalidParameter(format!(
                "evaluation seed {} must differ from the training seed",
                self.eval.seed
            )));
        }
        for levels in [&self.eval.sweep_levels, &self.eval.extended_sweep_levels] {
            if levels.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter(format!("sweep levels not increasing: {levels:?}")));
            }
        }
        let mut agent = self.agent.clone();
        agent.action_dim = 1;
        agent.validate()
    }

    pub fn env_config(&self, baseline: PulseSet, mode: EnvMode) -> Result<EnvConfig> {
        let config = EnvConfig {
            settings: EnvSettings { mode, ..self.env },
            noise: self.noise,
            baseline,
            nominal: self.nominal,
            target: self.gate.matrix(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn agent_config(&self, algorithm: Algorithm, env: &EnvConfig) -> Result<AgentConfig> {
        let config = AgentConfig {
            algorithm,
            obs_dim: 3,
            action_dim: env.action_dim(),
            // a zero initial action only makes sense as a residual
            zero_init_actor: self.agent.zero_init_actor && env.settings.mode == EnvMode::Residual,
            ..self.agent.clone()
        };
        config.validate()?;
        Ok(config)
    }
}
