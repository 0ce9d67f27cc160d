// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! One-step contextual-bandit calibration environment.
//!
//! An episode draws a device, scores the baseline pulse on it, shows the
//! agent the normalized (and possibly noisily estimated) offsets, decodes the
//! agent's action into smooth cosine-basis residuals, and rewards the fidelity
//! gained over the baseline on the same device. Estimation noise only ever
//! touches the observation; both fidelities use the true offsets.
//!
//! In direct mode the action is the whole pulse (`ε = bound·a`) on the
//! nominal device and the reward is the raw fidelity.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{avg_gate_fidelity, ComplexMatrix, DeviceParams, PulseSet, System};
use crate::ensemble::{apply_offsets, sample_offsets, DeviceOffsets, NoiseConfig};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream, StreamRng};

/// Column-normalized cosine modes `C_jk ∝ cos(πk(j+½)/N)`, `k = 1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineBasis {
    n: usize,
    k: usize,
    /// Row-major `N×K`.
    matrix: Vec<f64>,
}

impl CosineBasis {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k == 0 || n == 0 || k > n {
            return Err(Error::InvalidDimension(format!(
                "cosine basis needs 1 <= K <= N, got N={n}, K={k}"
            )));
        }
        let mut matrix = vec![0.0; n * k];
        for mode in 1..=k {
            let col: Vec<f64> = (0..n)
                .map(|j| (std::f64::consts::PI * mode as f64 * (j as f64 + 0.5) / n as f64).cos())
                .collect();
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (j, v) in col.into_iter().enumerate() {
                matrix[j * k + mode - 1] = v / norm;
            }
        }
        Ok(Self { n, k, matrix })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, j: usize, mode: usize) -> f64 {
        self.matrix[j * self.k + mode]
    }

    /// `C·c` for a coefficient vector of length `K`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.k);
        self.matrix
            .chunks_exact(self.k)
            .map(|row| row.iter().zip(coeffs).map(|(c, a)| c * a).sum())
            .collect()
    }
}

pub fn cosine_basis(n: usize, k: usize) -> Result<CosineBasis> {
    CosineBasis::new(n, k)
}

/// Residual waveforms `C·(α·a_i)`; `a_1` is the first `K` action entries.
/// Entries outside `[-1, 1]` are clamped and counted in `clamped`.
pub fn residual_from_action(
    action: &[f64],
    basis: &CosineBasis,
    alpha: f64,
    clamped: &mut u64,
) -> Result<[Vec<f64>; 2]> {
    let k = basis.k();
    if action.len() != 2 * k {
        return Err(Error::DimensionMismatch {
            expected: 2 * k,
            actual: action.len(),
        });
    }
    let coeffs: Vec<f64> = action
        .iter()
        .map(|&a| {
            let c = clamp_unit(a, clamped);
            alpha * c
        })
        .collect();
    Ok([basis.synthesize(&coeffs[..k]), basis.synthesize(&coeffs[k..])])
}

fn clamp_unit(a: f64, clamped: &mut u64) -> f64 {
    if a.is_nan() {
        *clamped += 1;
        0.0
    } else if !(-1.0..=1.0).contains(&a) {
        *clamped += 1;
        a.clamp(-1.0, 1.0)
    } else {
        a
    }
}

/// `baseline + residual`, clipped to `[-bound, bound]`.
pub fn compose_pulse(baseline: &PulseSet, residual: &[Vec<f64>; 2], bound: f64) -> Result<PulseSet> {
    let n = baseline.n_slices();
    if residual.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: residual[0].len().min(residual[1].len()),
        });
    }
    let mut channels = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for c in 0..2 {
        channels[c] = baseline.channels[c]
            .iter()
            .zip(&residual[c])
            .map(|(e, d)| (e + d).clamp(-bound, bound))
            .collect();
    }
    PulseSet::new(baseline.dt, bound, channels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EnvMode {
    #[default]
    Residual,
    Direct,
}

/// Serializable knobs of the environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSettings {
    /// Cosine modes per drive.
    pub k: usize,
    pub alpha: f64,
    pub obs_clip: f64,
    pub est_eta_omega: f64,
    pub est_eta_g: f64,
    pub mode: EnvMode,
}

impl Default for EnvSettings {
    fn default() -> Self {
        Self {
            k: 20,
            alpha: 0.03,
            obs_clip: 3.0,
            est_eta_omega: 0.0,
            est_eta_g: 0.0,
            mode: EnvMode::Residual,
        }
    }
}

/// Everything an episode needs.
#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub settings: EnvSettings,
    pub noise: NoiseConfig,
    pub baseline: PulseSet,
    pub nominal: DeviceParams,
    pub target: ComplexMatrix,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.settings;
        self.noise.validate()?;
        self.nominal.validate()?;
        self.baseline.validate()?;
        if s.k == 0 || s.k > self.baseline.n_slices() {
            return Err(Error::InvalidParameter(format!(
                "K = {} must lie in 1..={}",
                s.k,
                self.baseline.n_slices()
            )));
        }
        if !(s.alpha > 0.0 && s.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {}", s.alpha)));
        }
        if !(s.obs_clip > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "obs_clip must be positive, got {}",
                s.obs_clip
            )));
        }
        for (name, v) in [("est_eta_omega", s.est_eta_omega), ("est_eta_g", s.est_eta_g)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn action_dim(&self) -> usize {
        match self.settings.mode {
            EnvMode::Residual => 2 * self.settings.k,
            EnvMode::Direct => 2 * self.baseline.n_slices(),
        }
    }

    pub fn amp_bound(&self) -> f64 {
        self.baseline.amp_bound
    }
}

/// Normalized context `(δω1/σ_ω, δω2/σ_ω, δg/σ_g)`, clipped to the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Observation(pub [f64; 3]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub offsets: DeviceOffsets,
    pub observation: Observation,
    pub action: Vec<f64>,
    pub f_oct: f64,
    pub f_rl: f64,
    pub reward: f64,
}

/// Observation for `offsets`, with fresh estimation errors drawn from `rng`
/// (three normals per call, whether or not the widths are zero).
pub fn make_observation<R: Rng + ?Sized>(
    offsets: &DeviceOffsets,
    settings: &EnvSettings,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<Observation> {
    let z: [f64; 3] = [
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ];
    let estimates = [
        offsets.d_omega1 + settings.est_eta_omega * z[0],
        offsets.d_omega2 + settings.est_eta_omega * z[1],
        offsets.d_g + settings.est_eta_g * z[2],
    ];
    let sigmas = [noise.sigma_omega, noise.sigma_omega, noise.sigma_g];
    let mut o = [0.0; 3];
    for i in 0..3 {
        o[i] = if sigmas[i] > 0.0 {
            (estimates[i] / sigmas[i]).clamp(-settings.obs_clip, settings.obs_clip)
        } else if estimates[i] == 0.0 {
            0.0
        } else {
            return Err(Error::InvalidParameter(format!(
                "cannot normalize offset {} by zero width",
                estimates[i]
            )));
        };
    }
    Ok(Observation(o))
}

/// A device that has been drawn and scored but not yet acted on.
#[derive(Debug, Clone)]
pub struct PendingEpisode {
    pub offsets: DeviceOffsets,
    pub observation: Observation,
    pub f_oct: f64,
    system: System,
}

/// The environment with its device and estimation streams.
#[derive(Debug, Clone)]
pub struct CalibrationEnv {
    config: EnvConfig,
    basis: CosineBasis,
    nominal_system: System,
    device_rng: StreamRng,
    estimation_rng: StreamRng,
    clamped_actions: u64,
}

impl CalibrationEnv {
    /// Device draws come from the `Device` stream of `seed`, estimation
    /// errors from its `Estimation` stream.
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        Self::with_streams(
            config,
            stream_rng(seed, Stream::Device),
            stream_rng(seed, Stream::Estimation),
        )
    }

    pub fn with_streams(config: EnvConfig, device_rng: StreamRng, estimation_rng: StreamRng) -> Result<Self> {
        config.validate()?;
        let basis = CosineBasis::new(config.baseline.n_slices(), config.settings.k)?;
        let nominal_system = System::new(&config.nominal);
        Ok(Self {
            config,
            basis,
            nominal_system,
            device_rng,
            estimation_rng,
            clamped_actions: 0,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn basis(&self) -> &CosineBasis {
        &self.basis
    }

    pub fn action_dim(&self) -> usize {
        self.config.action_dim()
    }

    /// Number of out-of-range action entries clamped so far.
    pub fn clamped_actions(&self) -> u64 {
        self.clamped_actions
    }

    pub fn rng_positions(&self) -> (u128, u128) {
        (self.device_rng.get_word_pos(), self.estimation_rng.get_word_pos())
    }

    pub fn set_rng_positions(&mut self, device: u128, estimation: u128) {
        self.device_rng.set_word_pos(device);
        self.estimation_rng.set_word_pos(estimation);
    }

    /// Steps 1–4: draw a device, score the baseline, build the observation.
    pub fn begin(&mut self) -> Result<PendingEpisode> {
        match self.config.settings.mode {
            EnvMode::Residual => {
                let offsets = sample_offsets(&mut self.device_rng, &self.config.noise);
                self.begin_with_offsets(offsets)
            }
            EnvMode::Direct => Ok(PendingEpisode {
                offsets: DeviceOffsets::ZERO,
                observation: Observation::default(),
                f_oct: 0.0,
                system: self.nominal_system.clone(),
            }),
        }
    }

    /// Like [`begin`](Self::begin) but on a caller-chosen device.
    pub fn begin_with_offsets(&mut self, offsets: DeviceOffsets) -> Result<PendingEpisode> {
        let system = System::new(&apply_offsets(&self.config.nominal, &offsets));
        let f_oct = self.fidelity(&system, &self.config.baseline)?;
        let observation = make_observation(
            &offsets,
            &self.config.settings,
            &self.config.noise,
            &mut self.estimation_rng,
        )?;
        Ok(PendingEpisode {
            offsets,
            observation,
            f_oct,
            system,
        })
    }

    /// The pulse an action decodes to.
    pub fn decode(&mut self, action: &[f64]) -> Result<PulseSet> {
        let bound = self.config.amp_bound();
        match self.config.settings.mode {
            EnvMode::Residual => {
                let residual = residual_from_action(
                    action,
                    &self.basis,
                    self.config.settings.alpha,
                    &mut self.clamped_actions,
                )?;
                compose_pulse(&self.config.baseline, &residual, bound)
            }
            EnvMode::Direct => {
                let n = self.config.baseline.n_slices();
                if action.len() != 2 * n {
                    return Err(Error::DimensionMismatch {
                        expected: 2 * n,
                        actual: action.len(),
                    });
                }
                let scaled: Vec<f64> = action
                    .iter()
                    .map(|&a| bound * clamp_unit(a, &mut self.clamped_actions))
                    .collect();
                PulseSet::from_flat(&scaled, self.config.baseline.dt, bound)
            }
        }
    }

    /// Steps 5–7: decode the action, score it on the true device, reward.
    pub fn finish(&mut self, pending: PendingEpisode, action: Vec<f64>) -> Result<EpisodeRecord> {
        let pulse = self.decode(&action)?;
        let f_rl = self.fidelity(&pending.system, &pulse)?;
        let reward = match self.config.settings.mode {
            EnvMode::Residual => f_rl - pending.f_oct,
            EnvMode::Direct => f_rl,
        };
        Ok(EpisodeRecord {
            offsets: pending.offsets,
            observation: pending.observation,
            action,
            f_oct: pending.f_oct,
            f_rl,
            reward,
        })
    }

    /// A full episode with `action_provider` choosing the action.
    pub fn episode<P>(&mut self, mut action_provider: P) -> Result<EpisodeRecord>
    where
        P: FnMut(&Observation) -> Vec<f64>,
    {
        let pending = self.begin()?;
        let action = action_provider(&pending.observation);
        self.finish(pending, action)
    }

    fn fidelity(&self, system: &System, pulse: &PulseSet) -> Result<f64> {
        let u = system.propagate(pulse).map_err(|e| {
            Error::Numerical(format!("episode aborted, propagation failed: {e}"))
        })?;
        avg_gate_fidelity(&u, &self.config.target)
    }
}

/// One residual-mode episode against a fresh environment state.
pub fn env_episode<P>(action_provider: P, env: &mut CalibrationEnv) -> Result<EpisodeRecord>
where
    P: FnMut(&Observation) -> Vec<f64>,
{
    if env.config.settings.mode != EnvMode::Residual {
        return Err(Error::InvalidParameter("env_episode needs residual mode".into()));
    }
    env.episode(action_provider)
}

/// One direct-synthesis episode on the nominal device.
pub fn direct_env_episode<P>(action_provider: P, env: &mut CalibrationEnv) -> Result<EpisodeRecord>
where
    P: FnMut(&Observation) -> Vec<f64>,
{
    if env.config.settings.mode != EnvMode::Direct {
        return Err(Error::InvalidParameter("direct_env_episode needs direct mode".into()));
    }
    env.episode(action_provider)
}
