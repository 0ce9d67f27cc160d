// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! Continuous-action agents specialized to one-step contextual bandits.
//!
//! Every episode terminates after a single action, so each critic regresses
//! directly onto the observed reward: `y = r`. No next observation is stored
//! and no bootstrapped value ever enters a target; `gamma` is carried in the
//! config for completeness only. Target networks are still maintained by
//! Polyak averaging for the off-policy methods.

mod ddpg;
mod ppo;
pub mod replay;
mod sac;
pub mod train;

use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Bundle;
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::nn::{AdamState, Mlp};

pub use ddpg::DeterministicAgent;
pub use ppo::PpoAgent;
pub use replay::{Batch, ReplayBuffer};
pub use sac::SacAgent;
pub use train::{resume, train, training_bundle, LearningCurve, TrainEpisode, TrainOptions, TrainProgress};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sac,
    Td3,
    Ddpg,
    Ppo,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Sac, Algorithm::Td3, Algorithm::Ddpg, Algorithm::Ppo];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sac => "sac",
            Algorithm::Td3 => "td3",
            Algorithm::Ddpg => "ddpg",
            Algorithm::Ppo => "ppo",
        }
    }

    pub fn is_off_policy(self) -> bool {
        !matches!(self, Algorithm::Ppo)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm `{s}`")))
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup_steps: usize,
    /// Gaussian exploration width for TD3/DDPG, in action units.
    pub exploration_sigma: f64,
    /// TD3 actor/target update period, in critic updates.
    pub policy_delay: usize,
    /// Initial SAC temperature; the temperature is then tuned automatically.
    pub sac_init_temperature: f64,
    /// SAC entropy target; `None` means `−action_dim`.
    pub sac_target_entropy: Option<f64>,
    pub ppo_rollout: usize,
    pub ppo_epochs: usize,
    pub ppo_minibatch: usize,
    pub ppo_clip: f64,
    pub ppo_value_coef: f64,
    pub ppo_log_std_init: f64,
    /// Zero the actor's output layer so the initial policy is the zero action.
    pub zero_init_actor: bool,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Td3,
            obs_dim: 3,
            action_dim: 40,
            hidden: vec![256, 256],
            lr: 3e-4,
            gamma: 0.99,
            tau: 0.005,
            batch_size: 256,
            buffer_capacity: 100_000,
            warmup_steps: 1000,
            exploration_sigma: 0.1,
            policy_delay: 2,
            sac_init_temperature: 0.01,
            sac_target_entropy: None,
            ppo_rollout: 1024,
            ppo_epochs: 10,
            ppo_minibatch: 64,
            ppo_clip: 0.2,
            ppo_value_coef: 0.5,
            ppo_log_std_init: 0.0,
            zero_init_actor: true,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.obs_dim == 0 || self.action_dim == 0 || self.hidden.contains(&0) {
            return bad(format!(
                "dimensions must be positive (obs {}, action {}, hidden {:?})",
                self.obs_dim, self.action_dim, self.hidden
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.policy_delay == 0 {
            return bad("batch_size, buffer_capacity and policy_delay must be >= 1".into());
        }
        if self.ppo_rollout == 0 || self.ppo_epochs == 0 || self.ppo_minibatch == 0 {
            return bad("PPO rollout, epochs and minibatch must be >= 1".into());
        }
        if !(self.exploration_sigma >= 0.0 && self.sac_init_temperature > 0.0 && self.ppo_clip > 0.0)
        {
            return bad("exploration width, temperature and clip must be positive".into());
        }
        Ok(())
    }

    fn layer_sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(output);
        sizes
    }
}

/// Losses reported by one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
    pub temperature: Option<f64>,
}

impl UpdateStats {
    fn check_finite(&self) -> Result<()> {
        let values = [
            Some(self.critic_loss),
            self.actor_loss,
            self.temperature,
        ];
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite loss: {self:?}")));
        }
        Ok(())
    }
}

/// A trainable agent of any of the four families.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Agent {
    Sac(SacAgent),
    Deterministic(DeterministicAgent),
    Ppo(PpoAgent),
}

impl Agent {
    pub fn new(config: AgentConfig) -> Result<Self> {
        config.validate()?;
        Ok(match config.algorithm {
            Algorithm::Sac => Agent::Sac(SacAgent::new(config)?),
            Algorithm::Td3 | Algorithm::Ddpg => Agent::Deterministic(DeterministicAgent::new(config)?),
            Algorithm::Ppo => Agent::Ppo(PpoAgent::new(config)?),
        })
    }

    pub fn config(&self) -> &AgentConfig {
        match self {
            Agent::Sac(a) => &a.config,
            Agent::Deterministic(a) => &a.config,
            Agent::Ppo(a) => &a.config,
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.config().algorithm
    }

    /// Action in `[-1, 1]^action_dim`. Exploring off-policy agents act
    /// uniformly at random during warmup.
    pub fn act(&mut self, obs: &Observation, deterministic: bool) -> Result<Vec<f64>> {
        match self {
            Agent::Sac(a) => a.act(obs, deterministic),
            Agent::Deterministic(a) => a.act(obs, deterministic),
            Agent::Ppo(a) => a.act(obs, deterministic),
        }
    }

    /// Records a finished episode and runs whatever update is due.
    pub fn observe(&mut self, obs: &Observation, action: &[f64], reward: f64) -> Result<Option<UpdateStats>> {
        let stats = match self {
            Agent::Sac(a) => a.observe(obs, action, reward)?,
            Agent::Deterministic(a) => a.observe(obs, action, reward)?,
            Agent::Ppo(a) => a.observe(obs, action, reward)?,
        };
        if let Some(s) = &stats {
            s.check_finite()?;
        }
        Ok(stats)
    }

    /// Updates skipped because too little data had been collected.
    pub fn skipped_updates(&self) -> u64 {
        match self {
            Agent::Sac(a) => a.skipped_updates,
            Agent::Deterministic(a) => a.skipped_updates,
            Agent::Ppo(a) => a.skipped_updates,
        }
    }

    /// Environment steps observed so far.
    pub fn steps(&self) -> u64 {
        match self {
            Agent::Sac(a) => a.steps,
            Agent::Deterministic(a) => a.steps,
            Agent::Ppo(a) => a.steps,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Agent::Sac(a) => a.is_finite(),
            Agent::Deterministic(a) => a.is_finite(),
            Agent::Ppo(a) => a.is_finite(),
        }
    }

    /// Inference-only snapshot of the current policy.
    pub fn policy(&self) -> InferencePolicy {
        let (head, actor) = match self {
            Agent::Sac(a) => (PolicyHead::TanhMeanOfGaussian, a.actor.clone()),
            Agent::Deterministic(a) => (PolicyHead::Tanh, a.actor.clone()),
            Agent::Ppo(a) => (PolicyHead::ClippedMean, a.actor.clone()),
        };
        InferencePolicy {
            algorithm: self.algorithm(),
            action_dim: self.config().action_dim,
            head,
            actor,
        }
    }

    /// Complete training state: networks, optimizer moments, replay data and
    /// random-stream positions.
    pub fn to_bundle(&self) -> Bundle {
        let mut b = Bundle::new();
        let cfg = self.config();
        b.set_meta("algorithm", cfg.algorithm);
        b.set_meta("obs_dim", cfg.obs_dim);
        b.set_meta("action_dim", cfg.action_dim);
        b.set_meta("seed", cfg.seed);
        b.set_meta("step", self.steps());
        b.set_meta("config", serde_json::to_string(cfg).expect("config serializes"));
        match self {
            Agent::Sac(a) => a.save(&mut b),
            Agent::Deterministic(a) => a.save(&mut b),
            Agent::Ppo(a) => a.save(&mut b),
        }
        b
    }

    pub fn from_bundle(b: &Bundle) -> Result<Self> {
        let config: AgentConfig = serde_json::from_str(b.meta("config")?)?;
        let mut agent = Agent::new(config)?;
        match &mut agent {
            Agent::Sac(a) => a.load(b)?,
            Agent::Deterministic(a) => a.load(b)?,
            Agent::Ppo(a) => a.load(b)?,
        }
        Ok(agent)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.to_bundle().save(dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Self::from_bundle(&Bundle::load(dir)?)
    }
}

/// How the actor's raw output becomes an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyHead {
    /// `tanh(out)`.
    Tanh,
    /// `tanh` of the first half of the output (the Gaussian mean).
    TanhMeanOfGaussian,
    /// `clip(out, -1, 1)`.
    ClippedMean,
}

/// Frozen deterministic policy: one forward pass per device.
#[derive(Debug, Clone, PartialEq)]
pub struct InferencePolicy {
    pub algorithm: Algorithm,
    pub action_dim: usize,
    pub head: PolicyHead,
    pub actor: Mlp,
}

impl InferencePolicy {
    pub fn act(&self, obs: &Observation) -> Result<Vec<f64>> {
        let raw = self.actor.predict_one(obs.as_slice())?;
        Ok(apply_head(self.head, &raw, self.action_dim))
    }

    pub fn act_batch(&self, obs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let raw = self.actor.predict(obs)?;
        let mut out = raw.slice(ndarray::s![.., ..self.action_dim]).to_owned();
        match self.head {
            PolicyHead::Tanh | PolicyHead::TanhMeanOfGaussian => out.mapv_inplace(f64::tanh),
            PolicyHead::ClippedMean => out.mapv_inplace(|v| v.clamp(-1.0, 1.0)),
        }
        Ok(out)
    }
}

fn apply_head(head: PolicyHead, raw: &[f64], action_dim: usize) -> Vec<f64> {
    match head {
        PolicyHead::Tanh | PolicyHead::TanhMeanOfGaussian => {
            raw[..action_dim].iter().map(|v| v.tanh()).collect()
        }
        PolicyHead::ClippedMean => raw[..action_dim].iter().map(|v| v.clamp(-1.0, 1.0)).collect(),
    }
}

/// Writes the actor of `agent` as an inference checkpoint.
pub fn policy_export(agent: &Agent, dir: &Path) -> Result<()> {
    agent.save(dir)
}

/// Reads only what inference needs from any agent checkpoint.
pub fn policy_import(dir: &Path) -> Result<InferencePolicy> {
    policy_from_bundle(&Bundle::load(dir)?)
}

pub fn policy_from_bundle(b: &Bundle) -> Result<InferencePolicy> {
    let algorithm: Algorithm = b.meta("algorithm")?.parse()?;
    let action_dim: usize = b.meta_parse("action_dim")?;
    let (shape, data) = b.get("actor")?;
    let mut actor = Mlp::zeros(shape)?;
    actor.load_flat(data)?;
    let head = match algorithm {
        Algorithm::Sac => PolicyHead::TanhMeanOfGaussian,
        Algorithm::Td3 | Algorithm::Ddpg => PolicyHead::Tanh,
        Algorithm::Ppo => PolicyHead::ClippedMean,
    };
    let expected_out = if head == PolicyHead::TanhMeanOfGaussian {
        2 * action_dim
    } else {
        action_dim
    };
    if actor.output_dim() != expected_out {
        return Err(Error::Checkpoint(format!(
            "actor output {} does not match action_dim {action_dim}",
            actor.output_dim()
        )));
    }
    Ok(InferencePolicy {
        algorithm,
        action_dim,
        head,
        actor,
    })
}

// ---- shared helpers -------------------------------------------------------

pub(crate) fn obs_row(obs: &Observation) -> Array2<f64> {
    Array2::from_shape_vec((1, 3), obs.0.to_vec()).expect("three entries")
}

pub(crate) fn critic_input(obs: &Array2<f64>, actions: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[obs.view(), actions.view()]).expect("matching rows")
}

/// MSE regression of a critic onto the rewards; returns the loss.
pub(crate) fn regress_critic(
    critic: &mut Mlp,
    opt: &mut AdamState,
    input: &Array2<f64>,
    rewards: &[f64],
) -> Result<f64> {
    let (q, cache) = critic.forward(input.view())?;
    let n = rewards.len() as f64;
    let mut grad = Array2::zeros(q.raw_dim());
    let mut loss = 0.0;
    for (i, &r) in rewards.iter().enumerate() {
        let diff = q[[i, 0]] - r;
        loss += diff * diff;
        grad[[i, 0]] = 2.0 * diff / n;
    }
    let (grads, _) = critic.backward(&cache, &grad);
    opt.step_mlp(critic, &grads)?;
    Ok(loss / n)
}

pub(crate) fn save_net(b: &mut Bundle, name: &str, net: &Mlp) {
    b.push(name, net.sizes().to_vec(), net.to_flat());
}

pub(crate) fn load_net(b: &Bundle, name: &str, net: &mut Mlp) -> Result<()> {
    let (shape, data) = b.get(name)?;
    if shape != net.sizes() {
        return Err(Error::Checkpoint(format!(
            "network `{name}` has sizes {shape:?}, expected {:?}",
            net.sizes()
        )));
    }
    net.load_flat(data)
}

pub(crate) fn save_adam(b: &mut Bundle, name: &str, opt: &AdamState) {
    b.push(&format!("{name}.m"), vec![opt.m.len()], opt.m.clone());
    b.push(&format!("{name}.v"), vec![opt.v.len()], opt.v.clone());
    b.set_meta(&format!("{name}.step"), opt.step);
}

pub(crate) fn load_adam(b: &Bundle, name: &str, opt: &mut AdamState) -> Result<()> {
    let (_, m) = b.get(&format!("{name}.m"))?;
    let (_, v) = b.get(&format!("{name}.v"))?;
    if m.len() != opt.m.len() || v.len() != opt.v.len() {
        return Err(Error::Checkpoint(format!("optimizer `{name}` size mismatch")));
    }
    opt.m = m.to_vec();
    opt.v = v.to_vec();
    opt.step = b.meta_parse(&format!("{name}.step"))?;
    Ok(())
}

pub(crate) fn save_replay(b: &mut Bundle, buffer: &ReplayBuffer) {
    let (obs, actions, rewards, next) = buffer.raw_parts();
    b.push("replay.observations", vec![obs.len()], obs.to_vec());
    b.push("replay.actions", vec![actions.len()], actions.to_vec());
    b.push("replay.rewards", vec![rewards.len()], rewards.to_vec());
    b.set_meta("replay.next", next);
}

pub(crate) fn load_replay(b: &Bundle, buffer: &mut ReplayBuffer) -> Result<()> {
    let (_, obs) = b.get("replay.observations")?;
    let (_, actions) = b.get("replay.actions")?;
    let (_, rewards) = b.get("replay.rewards")?;
    buffer.restore(obs.to_vec(), actions.to_vec(), rewards.to_vec(), b.meta_parse("replay.next")?)
}

pub(crate) fn save_rng(b: &mut Bundle, name: &str, rng: &crate::rng::StreamRng) {
    b.set_meta(&format!("rng.{name}"), rng.get_word_pos());
}

pub(crate) fn load_rng(b: &Bundle, name: &str, rng: &mut crate::rng::StreamRng) -> Result<()> {
    rng.set_word_pos(b.meta_parse::<u128>(&format!("rng.{name}"))?);
    Ok(())
}
