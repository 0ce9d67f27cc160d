// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! Deterministic-actor agents: TD3 (twin critics, delayed actor) and DDPG.

use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{
    critic_input, load_adam, load_net, load_replay, load_rng, obs_row, regress_critic, save_adam,
    save_net, save_replay, save_rng, AgentConfig, Algorithm, ReplayBuffer, UpdateStats,
};
use crate::checkpoint::Bundle;
use crate::env::Observation;
use crate::error::Result;
use crate::nn::{AdamState, Mlp};
use crate::rng::{stream_rng, Stream, StreamRng};

#[derive(Debug, Clone)]
pub struct DeterministicAgent {
    pub config: AgentConfig,
    pub actor: Mlp,
    pub actor_target: Mlp,
    /// One critic for DDPG, two for TD3.
    pub critics: Vec<Mlp>,
    pub critic_targets: Vec<Mlp>,
    actor_opt: AdamState,
    critic_opts: Vec<AdamState>,
    pub buffer: ReplayBuffer,
    explore_rng: StreamRng,
    replay_rng: StreamRng,
    pub steps: u64,
    pub updates: u64,
    pub skipped_updates: u64,
}

impl DeterministicAgent {
    pub fn new(config: AgentConfig) -> Result<Self> {
        let mut init = stream_rng(config.seed, Stream::AgentInit);
        let mut actor = Mlp::new(&config.layer_sizes(config.obs_dim, config.action_dim), &mut init)?;
        if config.zero_init_actor {
            actor.zero_output_layer();
        }
        let n_critics = if config.algorithm == Algorithm::Td3 { 2 } else { 1 };
        let critic_sizes = config.layer_sizes(config.obs_dim + config.action_dim, 1);
        let critics = (0..n_critics)
            .map(|_| Mlp::new(&critic_sizes, &mut init))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            actor_target: actor.clone(),
            actor_opt: AdamState::for_mlp(&actor, config.lr),
            critic_targets: critics.clone(),
            critic_opts: critics.iter().map(|c| AdamState::for_mlp(c, config.lr)).collect(),
            critics,
            actor,
            buffer: ReplayBuffer::new(config.obs_dim, config.action_dim, config.buffer_capacity)?,
            explore_rng: stream_rng(config.seed, Stream::Exploration),
            replay_rng: stream_rng(config.seed, Stream::Replay),
            steps: 0,
            updates: 0,
            skipped_updates: 0,
            config,
        })
    }

    pub fn act(&mut self, obs: &Observation, deterministic: bool) -> Result<Vec<f64>> {
        if !deterministic && (self.steps as usize) < self.config.warmup_steps {
            return Ok((0..self.config.action_dim)
                .map(|_| self.explore_rng.random_range(-1.0..=1.0))
                .collect());
        }
        let mut a: Vec<f64> = self.actor.predict_one(obs.as_slice())?.iter().map(|v| v.tanh()).collect();
        if !deterministic {
            for v in &mut a {
                let noise: f64 = self.explore_rng.sample(StandardNormal);
                *v = (*v + self.config.exploration_sigma * noise).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    pub fn observe(&mut self, obs: &Observation, action: &[f64], reward: f64) -> Result<Option<UpdateStats>> {
        self.buffer.push(obs.as_slice(), action, reward)?;
        self.steps += 1;
        if (self.steps as usize) < self.config.warmup_steps {
            self.skipped_updates += 1;
            return Ok(None);
        }
        self.update().map(Some)
    }

    fn update(&mut self) -> Result<UpdateStats> {
        let batch = self.buffer.sample(self.config.batch_size, &mut self.replay_rng)?;
        let input = critic_input(&batch.observations, &batch.actions);
        let mut critic_loss = 0.0;
        for (critic, opt) in self.critics.iter_mut().zip(&mut self.critic_opts) {
            critic_loss += regress_critic(critic, opt, &input, &batch.rewards)?;
        }
        critic_loss /= self.critics.len() as f64;
        self.updates += 1;

        let delay = if self.config.algorithm == Algorithm::Td3 {
            self.config.policy_delay as u64
        } else {
            1
        };
        let mut actor_loss = None;
        if self.updates % delay == 0 {
            actor_loss = Some(self.update_actor(&batch.observations)?);
            let tau = self.config.tau;
            self.actor_target.soft_update(&self.actor, tau);
            for (t, c) in self.critic_targets.iter_mut().zip(&self.critics) {
                t.soft_update(c, tau);
            }
        }
        Ok(UpdateStats {
            critic_loss,
            actor_loss,
            temperature: None,
        })
    }

    /// Ascends `Q₁(o, tanh(actor(o)))` through the critic's input gradient.
    fn update_actor(&mut self, observations: &Array2<f64>) -> Result<f64> {
        let n = observations.nrows() as f64;
        let (raw, actor_cache) = self.actor.forward(observations.view())?;
        let actions = raw.mapv(f64::tanh);
        let (q, critic_cache) = self.critics[0].forward(critic_input(observations, &actions).view())?;
        let (_, input_grad) = self.critics[0].backward(&critic_cache, &Array2::from_elem(q.raw_dim(), -1.0 / n));
        let mut grad = input_grad.slice(s![.., self.config.obs_dim..]).to_owned();
        grad.zip_mut_with(&actions, |g, &a| *g *= 1.0 - a * a);
        let (grads, _) = self.actor.backward(&actor_cache, &grad);
        self.actor_opt.step_mlp(&mut self.actor, &grads)?;
        Ok(-q.mean().unwrap_or(0.0))
    }

    /// Critic estimate `Q₁(o, a)` for a single pair.
    pub fn q_value(&self, obs: &Observation, action: &[f64]) -> Result<f64> {
        let a = Array2::from_shape_vec((1, action.len()), action.to_vec())
            .map_err(|e| crate::Error::InvalidDimension(e.to_string()))?;
        Ok(self.critics[0].predict(critic_input(&obs_row(obs), &a).view())?[[0, 0]])
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critics.iter().all(Mlp::is_finite)
    }

    pub(crate) fn save(&self, b: &mut Bundle) {
        save_net(b, "actor", &self.actor);
        save_net(b, "actor_target", &self.actor_target);
        save_adam(b, "actor_opt", &self.actor_opt);
        for (i, ((c, t), o)) in self.critics.iter().zip(&self.critic_targets).zip(&self.critic_opts).enumerate() {
            save_net(b, &format!("critic{i}"), c);
            save_net(b, &format!("critic{i}_target"), t);
            save_adam(b, &format!("critic{i}_opt"), o);
        }
        save_replay(b, &self.buffer);
        save_rng(b, "exploration", &self.explore_rng);
        save_rng(b, "replay", &self.replay_rng);
        b.set_meta("updates", self.updates);
        b.set_meta("skipped_updates", self.skipped_updates);
    }

    pub(crate) fn load(&mut self, b: &Bundle) -> Result<()> {
        load_net(b, "actor", &mut self.actor)?;
        load_net(b, "actor_target", &mut self.actor_target)?;
        load_adam(b, "actor_opt", &mut self.actor_opt)?;
        for i in 0..self.critics.len() {
            load_net(b, &format!("critic{i}"), &mut self.critics[i])?;
            load_net(b, &format!("critic{i}_target"), &mut self.critic_targets[i])?;
            load_adam(b, &format!("critic{i}_opt"), &mut self.critic_opts[i])?;
        }
        load_replay(b, &mut self.buffer)?;
        load_rng(b, "exploration", &mut self.explore_rng)?;
        load_rng(b, "replay", &mut self.replay_rng)?;
        self.steps = b.meta_parse("step")?;
        self.updates = b.meta_parse("updates")?;
        self.skipped_updates = b.meta_parse("skipped_updates")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(algorithm: Algorithm) -> AgentConfig {
        AgentConfig {
            algorithm,
            action_dim: 2,
            hidden: vec![16, 16],
            batch_size: 16,
            warmup_steps: 10,
            lr: 1e-2,
            ..AgentConfig::default()
        }
    }

    #[test]
    fn zero_initialized_actor_outputs_zero_action() {
        let mut agent = DeterministicAgent::new(small(Algorithm::Td3)).unwrap();
        let a = agent.act(&Observation([0.3, -1.0, 2.0]), true).unwrap();
        assert_eq!(a, vec![0.0, 0.0]);
    }

    #[test]
    fn td3_updates_actor_every_second_step() {
        let mut agent = DeterministicAgent::new(small(Algorithm::Td3)).unwrap();
        let obs = Observation([0.0; 3]);
        let mut actor_updates = 0;
        for _ in 0..30 {
            let a = agent.act(&obs, false).unwrap();
            if let Some(s) = agent.observe(&obs, &a, 0.0).unwrap() {
                actor_updates += s.actor_loss.is_some() as usize;
            }
        }
        assert_eq!(agent.updates, 21);
        assert_eq!(actor_updates, 10);
        assert_eq!(agent.skipped_updates, 9);
    }

    #[test]
    fn ddpg_learns_a_one_dimensional_bandit() {
        // reward = -(a0 - 0.5)^2 - (a1 + 0.25)^2, optimum independent of o
        let mut agent = DeterministicAgent::new(AgentConfig {
            exploration_sigma: 0.3,
            ..small(Algorithm::Ddpg)
        })
        .unwrap();
        let obs = Observation([0.1, 0.2, 0.3]);
        for _ in 0..1500 {
            let a = agent.act(&obs, false).unwrap();
            let r = -(a[0] - 0.5).powi(2) - (a[1] + 0.25).powi(2);
            agent.observe(&obs, &a, r).unwrap();
        }
        let a = agent.act(&obs, true).unwrap();
        assert!((a[0] - 0.5).abs() < 0.1 && (a[1] + 0.25).abs() < 0.1, "{a:?}");
    }
}
