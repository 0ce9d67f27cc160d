// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! Evaluation settings: nominal device, fixed static-noise device, device
//! ensembles and estimation-noise sweeps. All policy actions are
//! deterministic.

use serde::{Deserialize, Serialize};

use crate::agents::InferencePolicy;
use crate::dynamics::PulseSet;
use crate::ensemble::{fixed_single_device, sample_offsets, DeviceOffsets};
use crate::env::{CalibrationEnv, EnvConfig, EnvMode};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream, StreamRng};

/// What chooses the pulse on each device.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    /// The optimized pulse as is (zero residual).
    Baseline,
    Policy(&'a InferencePolicy),
}

impl Controller<'_> {
    fn action(&self, obs: &crate::env::Observation, dim: usize) -> Result<Vec<f64>> {
        match self {
            Controller::Baseline => Ok(vec![0.0; dim]),
            Controller::Policy(p) => {
                if p.action_dim != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        actual: p.action_dim,
                    });
                }
                p.act(obs)
            }
        }
    }
}

/// Fidelity of one controller on one device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceResult {
    pub offsets: DeviceOffsets,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub method: String,
    pub seed: u64,
    pub devices: Vec<DeviceResult>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl EnsembleStats {
    pub fn from_devices(method: &str, seed: u64, devices: Vec<DeviceResult>) -> Result<Self> {
        if devices.is_empty() {
            return Err(Error::InvalidParameter("ensemble needs at least one device".into()));
        }
        let f: Vec<f64> = devices.iter().map(|d| d.fidelity).collect();
        let (mean, std) = mean_std(&f);
        Ok(Self {
            method: method.to_string(),
            seed,
            devices,
            mean,
            std,
        })
    }

    pub fn m(&self) -> usize {
        self.devices.len()
    }

    pub fn fidelities(&self) -> Vec<f64> {
        self.devices.iter().map(|d| d.fidelity).collect()
    }

    pub fn mean_infidelity(&self) -> f64 {
        1.0 - self.mean
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn residual_env(config: &EnvConfig, seed: u64) -> Result<CalibrationEnv> {
    if config.settings.mode != EnvMode::Residual {
        return Err(Error::InvalidParameter("evaluation needs residual mode".into()));
    }
    CalibrationEnv::with_streams(
        config.clone(),
        stream_rng(seed, Stream::Evaluation),
        stream_rng(seed, Stream::Estimation),
    )
}

fn on_device(env: &mut CalibrationEnv, controller: Controller, offsets: DeviceOffsets) -> Result<f64> {
    let pending = env.begin_with_offsets(offsets)?;
    let action = controller.action(&pending.observation, env.action_dim())?;
    Ok(env.finish(pending, action)?.f_rl)
}

/// Fidelity at zero offsets.
pub fn eval_nominal(controller: Controller, config: &EnvConfig) -> Result<f64> {
    on_device(&mut residual_env(config, 0)?, controller, DeviceOffsets::ZERO)
}

/// Fidelity on the fixed static-noise device.
pub fn eval_single(controller: Controller, config: &EnvConfig, seed: u64) -> Result<f64> {
    on_device(&mut residual_env(config, seed)?, controller, fixed_single_device())
}

/// Devices of a held-out ensemble, drawn from the `Evaluation` stream of `seed`.
pub fn ensemble_devices(config: &EnvConfig, m: usize, seed: u64) -> Vec<DeviceOffsets> {
    let mut rng: StreamRng = stream_rng(seed, Stream::Evaluation);
    (0..m).map(|_| sample_offsets(&mut rng, &config.noise)).collect()
}

/// `M` fresh devices; estimation errors (if any) come from the
/// `Estimation` stream of `seed`.
pub fn eval_ensemble(controller: Controller, method: &str, config: &EnvConfig, m: usize, seed: u64) -> Result<EnsembleStats> {
    if m == 0 {
        return Err(Error::InvalidParameter("M must be >= 1".into()));
    }
    let mut env = residual_env(config, seed)?;
    let devices = ensemble_devices(config, m, seed)
        .into_iter()
        .map(|offsets| {
            Ok(DeviceResult {
                offsets,
                fidelity: on_device(&mut env, controller, offsets)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleStats::from_devices(method, seed, devices)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Omega,
    G,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Omega => "omega",
            SweepAxis::G => "g",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omega" => Ok(SweepAxis::Omega),
            "g" => Ok(SweepAxis::G),
            other => Err(Error::InvalidParameter(format!("unknown sweep axis `{other}` (omega|g)"))),
        }
    }
}

pub const DEFAULT_SWEEP_LEVELS: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];
pub const EXTENDED_SWEEP_LEVELS: [f64; 4] = [0.1, 0.25, 0.5, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    /// Relative estimation noise `η/σ` on the swept axis.
    pub levels: Vec<f64>,
    pub stats: Vec<EnsembleStats>,
}

/// Ensemble evaluation at each relative estimation-noise level on one axis;
/// the other axis stays noiseless.
pub fn obs_noise_sweep(
    controller: Controller,
    method: &str,
    config: &EnvConfig,
    axis: SweepAxis,
    levels: &[f64],
    m: usize,
    seed: u64,
) -> Result<SweepResult> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(format!("sweep levels must be strictly increasing, got {levels:?}")));
    }
    if levels.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::InvalidParameter(format!("sweep levels must be non-negative, got {levels:?}")));
    }
    let stats = levels
        .iter()
        .map(|&level| {
            let mut cfg = config.clone();
            cfg.settings.est_eta_omega = 0.0;
            cfg.settings.est_eta_g = 0.0;
            match axis {
                SweepAxis::Omega => cfg.settings.est_eta_omega = level * cfg.noise.sigma_omega,
                SweepAxis::G => cfg.settings.est_eta_g = level * cfg.noise.sigma_g,
            }
            eval_ensemble(controller, method, &cfg, m, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        axis,
        levels: levels.to_vec(),
        stats,
    })
}

/// Channel `channel` (0 or 1) of the baseline and of each corrected pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseOverlay {
    pub time: Vec<f64>,
    pub baseline: Vec<f64>,
    pub methods: Vec<(String, Vec<f64>)>,
}

pub fn pulse_overlay_export(baseline: &PulseSet, corrected: &[(String, PulseSet)], channel: usize) -> Result<PulseOverlay> {
    if channel > 1 {
        return Err(Error::InvalidParameter(format!("channel must be 0 or 1, got {channel}")));
    }
    let n = baseline.n_slices();
    let mut methods = Vec::with_capacity(corrected.len());
    for (name, p) in corrected {
        if p.n_slices() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: p.n_slices(),
            });
        }
        methods.push((name.clone(), p.channels[channel].clone()));
    }
    Ok(PulseOverlay {
        time: (0..n).map(|j| (j as f64 + 0.5) * baseline.dt).collect(),
        baseline: baseline.channels[channel].clone(),
        methods,
    })
}

/// The pulse a controller applies on the device with `offsets`.
pub fn corrected_pulse(controller: Controller, config: &EnvConfig, offsets: DeviceOffsets, seed: u64) -> Result<PulseSet> {
    let mut env = residual_env(config, seed)?;
    let pending = env.begin_with_offsets(offsets)?;
    let action = controller.action(&pending.observation, env.action_dim())?;
    env.decode(&action)
}
