// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! Proximal policy optimization for one-step episodes.
//!
//! Gaussian policy with a state-independent learned log-std. The advantage
//! is `r − V(o)`, normalized per rollout; the value net regresses onto `r`.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_distr::StandardNormal;
use rand::Rng;

use super::{load_adam, load_net, load_rng, save_adam, save_net, save_rng, AgentConfig, UpdateStats};
use crate::checkpoint::Bundle;
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::nn::{AdamState, Mlp};
use crate::rng::{stream_rng, Stream, StreamRng};

#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub config: AgentConfig,
    pub actor: Mlp,
    pub log_std: Vec<f64>,
    pub value: Mlp,
    actor_opt: AdamState,
    log_std_opt: AdamState,
    value_opt: AdamState,
    rollout_obs: Vec<f64>,
    rollout_actions: Vec<f64>,
    rollout_rewards: Vec<f64>,
    /// Unclipped sample behind the most recent exploring action.
    last_sample: Option<(Vec<f64>, Vec<f64>)>,
    explore_rng: StreamRng,
    shuffle_rng: StreamRng,
    pub steps: u64,
    pub updates: u64,
    pub skipped_updates: u64,
}

impl PpoAgent {
    pub fn new(config: AgentConfig) -> Result<Self> {
        let mut init = stream_rng(config.seed, Stream::AgentInit);
        let mut actor = Mlp::new(&config.layer_sizes(config.obs_dim, config.action_dim), &mut init)?;
        if config.zero_init_actor {
            actor.zero_output_layer();
        }
        let value = Mlp::new(&config.layer_sizes(config.obs_dim, 1), &mut init)?;
        Ok(Self {
            actor_opt: AdamState::for_mlp(&actor, config.lr),
            log_std_opt: AdamState::new(config.action_dim, config.lr),
            value_opt: AdamState::for_mlp(&value, config.lr),
            log_std: vec![config.ppo_log_std_init; config.action_dim],
            actor,
            value,
            rollout_obs: Vec::new(),
            rollout_actions: Vec::new(),
            rollout_rewards: Vec::new(),
            last_sample: None,
            explore_rng: stream_rng(config.seed, Stream::Exploration),
            shuffle_rng: stream_rng(config.seed, Stream::Replay),
            steps: 0,
            updates: 0,
            skipped_updates: 0,
            config,
        })
    }

    pub fn act(&mut self, obs: &Observation, deterministic: bool) -> Result<Vec<f64>> {
        let mean = self.actor.predict_one(obs.as_slice())?;
        if deterministic {
            return Ok(mean.iter().map(|v| v.clamp(-1.0, 1.0)).collect());
        }
        let raw: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| m + ls.exp() * self.explore_rng.sample::<f64, _>(StandardNormal))
            .collect();
        let clipped: Vec<f64> = raw.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        self.last_sample = Some((raw, clipped.clone()));
        Ok(clipped)
    }

    /// Stores the pre-clip sample when `action` is the last one handed out,
    /// otherwise `action` itself.
    pub fn observe(&mut self, obs: &Observation, action: &[f64], reward: f64) -> Result<Option<UpdateStats>> {
        if action.len() != self.config.action_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.action_dim,
                actual: action.len(),
            });
        }
        let stored = match self.last_sample.take() {
            Some((raw, clipped)) if clipped == action => raw,
            _ => action.to_vec(),
        };
        self.rollout_obs.extend_from_slice(obs.as_slice());
        self.rollout_actions.extend_from_slice(&stored);
        self.rollout_rewards.push(reward);
        self.steps += 1;
        if self.rollout_rewards.len() < self.config.ppo_rollout {
            self.skipped_updates += 1;
            return Ok(None);
        }
        let stats = self.update();
        self.rollout_obs.clear();
        self.rollout_actions.clear();
        self.rollout_rewards.clear();
        stats.map(Some)
    }

    fn log_probs(&self, mean: &Array2<f64>, actions: &Array2<f64>) -> Vec<f64> {
        let mut out = vec![0.0; mean.nrows()];
        for (i, lp) in out.iter_mut().enumerate() {
            for (c, &ls) in self.log_std.iter().enumerate() {
                let z = (actions[[i, c]] - mean[[i, c]]) * (-ls).exp();
                *lp += -0.5 * z * z - ls;
            }
        }
        out
    }

    fn update(&mut self) -> Result<UpdateStats> {
        let d = self.config.action_dim;
        let n = self.rollout_rewards.len();
        let obs = Array2::from_shape_vec((n, self.config.obs_dim), self.rollout_obs.clone())
            .map_err(|e| Error::InvalidDimension(e.to_string()))?;
        let actions = Array2::from_shape_vec((n, d), self.rollout_actions.clone())
            .map_err(|e| Error::InvalidDimension(e.to_string()))?;
        let rewards = self.rollout_rewards.clone();
        let old_log_prob = self.log_probs(&self.actor.predict(obs.view())?, &actions);
        let values = self.value.predict(obs.view())?;
        let mut adv: Vec<f64> = rewards.iter().enumerate().map(|(i, r)| r - values[[i, 0]]).collect();
        let mean = adv.iter().sum::<f64>() / n as f64;
        let sd = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        for a in &mut adv {
            *a = (*a - mean) / (sd + 1e-8);
        }

        let clip = self.config.ppo_clip;
        let mut order: Vec<usize> = (0..n).collect();
        let (mut last_policy, mut last_value) = (0.0, 0.0);
        for _ in 0..self.config.ppo_epochs {
            order.shuffle(&mut self.shuffle_rng);
            for chunk in order.chunks(self.config.ppo_minibatch) {
                let m = chunk.len();
                let mb_obs = obs.select(ndarray::Axis(0), chunk);
                let mb_act = actions.select(ndarray::Axis(0), chunk);
                let (mu, cache) = self.actor.forward(mb_obs.view())?;
                let log_prob = self.log_probs(&mu, &mb_act);
                let mut grad_mu = Array2::zeros((m, d));
                let mut grad_ls = vec![0.0; d];
                let mut policy_loss = 0.0;
                for (row, &i) in chunk.iter().enumerate() {
                    let ratio = (log_prob[row] - old_log_prob[i]).exp();
                    let unclipped = ratio * adv[i];
                    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv[i];
                    policy_loss -= unclipped.min(clipped);
                    if unclipped > clipped {
                        continue;
                    }
                    // d(−ρA)/d log π
                    let g = -unclipped / m as f64;
                    for c in 0..d {
                        let inv_var = (-2.0 * self.log_std[c]).exp();
                        let diff = mb_act[[row, c]] - mu[[row, c]];
                        grad_mu[[row, c]] = g * diff * inv_var;
                        grad_ls[c] += g * (diff * diff * inv_var - 1.0);
                    }
                }
                let (grads, _) = self.actor.backward(&cache, &grad_mu);
                self.actor_opt.step_mlp(&mut self.actor, &grads)?;
                self.log_std_opt.step_slice(&mut self.log_std, &grad_ls)?;
                last_policy = policy_loss / m as f64;

                let (v, vcache) = self.value.forward(mb_obs.view())?;
                let mut grad_v = Array2::zeros((m, 1));
                let mut value_loss = 0.0;
                for (row, &i) in chunk.iter().enumerate() {
                    let diff = v[[row, 0]] - rewards[i];
                    value_loss += diff * diff;
                    grad_v[[row, 0]] = self.config.ppo_value_coef * 2.0 * diff / m as f64;
                }
                let (vgrads, _) = self.value.backward(&vcache, &grad_v);
                self.value_opt.step_mlp(&mut self.value, &vgrads)?;
                last_value = value_loss / m as f64;
                self.updates += 1;
            }
        }
        Ok(UpdateStats {
            critic_loss: last_value,
            actor_loss: Some(last_policy),
            temperature: None,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.value.is_finite() && self.log_std.iter().all(|v| v.is_finite())
    }

    pub(crate) fn save(&self, b: &mut Bundle) {
        save_net(b, "actor", &self.actor);
        save_adam(b, "actor_opt", &self.actor_opt);
        b.push("log_std", vec![self.log_std.len()], self.log_std.clone());
        save_adam(b, "log_std_opt", &self.log_std_opt);
        save_net(b, "value", &self.value);
        save_adam(b, "value_opt", &self.value_opt);
        b.push("rollout.observations", vec![self.rollout_obs.len()], self.rollout_obs.clone());
        b.push("rollout.actions", vec![self.rollout_actions.len()], self.rollout_actions.clone());
        b.push("rollout.rewards", vec![self.rollout_rewards.len()], self.rollout_rewards.clone());
        save_rng(b, "exploration", &self.explore_rng);
        save_rng(b, "replay", &self.shuffle_rng);
        b.set_meta("updates", self.updates);
        b.set_meta("skipped_updates", self.skipped_updates);
    }

    pub(crate) fn load(&mut self, b: &Bundle) -> Result<()> {
        load_net(b, "actor", &mut self.actor)?;
        load_adam(b, "actor_opt", &mut self.actor_opt)?;
        let (_, log_std) = b.get("log_std")?;
        if log_std.len() != self.config.action_dim {
            return Err(Error::Checkpoint("log_std length mismatch".into()));
        }
        self.log_std = log_std.to_vec();
        load_adam(b, "log_std_opt", &mut self.log_std_opt)?;
        load_net(b, "value", &mut self.value)?;
        load_adam(b, "value_opt", &mut self.value_opt)?;
        self.rollout_obs = b.get("rollout.observations")?.1.to_vec();
        self.rollout_actions = b.get("rollout.actions")?.1.to_vec();
        self.rollout_rewards = b.get("rollout.rewards")?.1.to_vec();
        let n = self.rollout_rewards.len();
        if self.rollout_obs.len() != n * self.config.obs_dim || self.rollout_actions.len() != n * self.config.action_dim {
            return Err(Error::Checkpoint("rollout shape mismatch".into()));
        }
        load_rng(b, "exploration", &mut self.explore_rng)?;
        load_rng(b, "replay", &mut self.shuffle_rng)?;
        self.last_sample = None;
        self.steps = b.meta_parse("step")?;
        self.updates = b.meta_parse("updates")?;
        self.skipped_updates = b.meta_parse("skipped_updates")?;
        Ok(())
    }
}
