// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! Soft actor-critic with a tanh-squashed Gaussian policy and automatic
//! temperature tuning.
//!
//! The actor outputs `[μ, log σ]`. With `u = μ + σξ` and `a = tanh(u)`,
//! `log π(a|o) = Σ [log N(u; μ, σ) − log(1 − a² + ε)]`.

use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{
    critic_input, load_adam, load_net, load_replay, load_rng, regress_critic, save_adam, save_net,
    save_replay, save_rng, AgentConfig, ReplayBuffer, UpdateStats,
};
use crate::checkpoint::Bundle;
use crate::env::Observation;
use crate::error::Result;
use crate::nn::{AdamState, Mlp};
use crate::rng::{stream_rng, Stream, StreamRng};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const SQUASH_EPS: f64 = 1e-6;
const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone)]
pub struct SacAgent {
    pub config: AgentConfig,
    pub actor: Mlp,
    pub critics: [Mlp; 2],
    pub critic_targets: [Mlp; 2],
    actor_opt: AdamState,
    critic_opts: [AdamState; 2],
    pub log_alpha: f64,
    alpha_opt: AdamState,
    pub target_entropy: f64,
    pub buffer: ReplayBuffer,
    explore_rng: StreamRng,
    replay_rng: StreamRng,
    pub steps: u64,
    pub updates: u64,
    pub skipped_updates: u64,
}

/// Reparameterized sample of a batch of squashed Gaussians.
struct Sample {
    actions: Array2<f64>,
    /// Standard-normal draws `ξ`.
    xi: Array2<f64>,
    sigma: Array2<f64>,
    /// Whether `log σ` sat inside the clamp range (gradient passes).
    log_std_free: Array2<bool>,
    log_prob: Vec<f64>,
}

fn sample_policy<R: Rng + ?Sized>(raw: &Array2<f64>, action_dim: usize, rng: &mut R) -> Sample {
    let rows = raw.nrows();
    let mut actions = Array2::zeros((rows, action_dim));
    let mut xi = Array2::zeros((rows, action_dim));
    let mut sigma = Array2::zeros((rows, action_dim));
    let mut log_std_free = Array2::from_elem((rows, action_dim), false);
    let mut log_prob = vec![0.0; rows];
    for r in 0..rows {
        for c in 0..action_dim {
            let raw_log_std = raw[[r, action_dim + c]];
            let log_std = raw_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX);
            let sd = log_std.exp();
            let z: f64 = rng.sample(StandardNormal);
            let a = (raw[[r, c]] + sd * z).tanh();
            actions[[r, c]] = a;
            xi[[r, c]] = z;
            sigma[[r, c]] = sd;
            log_std_free[[r, c]] = raw_log_std == log_std;
            log_prob[r] += -0.5 * z * z - log_std - HALF_LOG_2PI - (1.0 - a * a + SQUASH_EPS).ln();
        }
    }
    Sample {
        actions,
        xi,
        sigma,
        log_std_free,
        log_prob,
    }
}

impl SacAgent {
    pub fn new(config: AgentConfig) -> Result<Self> {
        let mut init = stream_rng(config.seed, Stream::AgentInit);
        let mut actor = Mlp::new(&config.layer_sizes(config.obs_dim, 2 * config.action_dim), &mut init)?;
        if config.zero_init_actor {
            actor.zero_output_layer();
        }
        let critic_sizes = config.layer_sizes(config.obs_dim + config.action_dim, 1);
        let critics = [Mlp::new(&critic_sizes, &mut init)?, Mlp::new(&critic_sizes, &mut init)?];
        let log_alpha = config.sac_init_temperature.ln();
        Ok(Self {
            actor_opt: AdamState::for_mlp(&actor, config.lr),
            actor,
            critic_targets: critics.clone(),
            critic_opts: [
                AdamState::for_mlp(&critics[0], config.lr),
                AdamState::for_mlp(&critics[1], config.lr),
            ],
            critics,
            log_alpha,
            alpha_opt: AdamState::new(1, config.lr),
            target_entropy: config.sac_target_entropy.unwrap_or(-(config.action_dim as f64)),
            buffer: ReplayBuffer::new(config.obs_dim, config.action_dim, config.buffer_capacity)?,
            explore_rng: stream_rng(config.seed, Stream::Exploration),
            replay_rng: stream_rng(config.seed, Stream::Replay),
            steps: 0,
            updates: 0,
            skipped_updates: 0,
            config,
        })
    }

    pub fn temperature(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn act(&mut self, obs: &Observation, deterministic: bool) -> Result<Vec<f64>> {
        let d = self.config.action_dim;
        if !deterministic && (self.steps as usize) < self.config.warmup_steps {
            return Ok((0..d).map(|_| self.explore_rng.random_range(-1.0..=1.0)).collect());
        }
        let raw = self.actor.predict_one(obs.as_slice())?;
        if deterministic {
            return Ok(raw[..d].iter().map(|v| v.tanh()).collect());
        }
        let raw = Array2::from_shape_vec((1, 2 * d), raw).expect("actor output width");
        let sample = sample_policy(&raw, d, &mut self.explore_rng);
        Ok(sample.actions.into_raw_vec_and_offset().0)
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
        let d = self.config.action_dim;
        let batch = self.buffer.sample(self.config.batch_size, &mut self.replay_rng)?;
        let input = critic_input(&batch.observations, &batch.actions);
        let mut critic_loss = 0.0;
        for (critic, opt) in self.critics.iter_mut().zip(&mut self.critic_opts) {
            critic_loss += 0.5 * regress_critic(critic, opt, &input, &batch.rewards)?;
        }
        self.updates += 1;

        // actor: minimize E[α log π − min(Q₁, Q₂)]
        let obs = &batch.observations;
        let n = obs.nrows();
        let alpha = self.temperature();
        let (raw, actor_cache) = self.actor.forward(obs.view())?;
        let sample = sample_policy(&raw, d, &mut self.replay_rng);
        let pi_input = critic_input(obs, &sample.actions);
        let (q0, cache0) = self.critics[0].forward(pi_input.view())?;
        let (q1, cache1) = self.critics[1].forward(pi_input.view())?;
        let mut seed0 = Array2::zeros((n, 1));
        let mut seed1 = Array2::zeros((n, 1));
        let mut actor_loss = 0.0;
        for i in 0..n {
            let (q, seed) = if q0[[i, 0]] <= q1[[i, 0]] {
                (q0[[i, 0]], &mut seed0)
            } else {
                (q1[[i, 0]], &mut seed1)
            };
            seed[[i, 0]] = 1.0;
            actor_loss += alpha * sample.log_prob[i] - q;
        }
        actor_loss /= n as f64;
        let (_, g0) = self.critics[0].backward(&cache0, &seed0);
        let (_, g1) = self.critics[1].backward(&cache1, &seed1);
        let q_grad = g0.slice(s![.., self.config.obs_dim..]).to_owned() + g1.slice(s![.., self.config.obs_dim..]);

        let mut grad = Array2::zeros(raw.raw_dim());
        let scale = 1.0 / n as f64;
        for i in 0..n {
            for c in 0..d {
                let a = sample.actions[[i, c]];
                let sd = sample.sigma[[i, c]];
                let z = sample.xi[[i, c]];
                let one_minus = 1.0 - a * a;
                // d/du of −log(1 − a² + ε)
                let squash = 2.0 * a * one_minus / (one_minus + SQUASH_EPS);
                let du = alpha * squash - q_grad[[i, c]] * one_minus;
                grad[[i, c]] = scale * du;
                if sample.log_std_free[[i, c]] {
                    grad[[i, d + c]] = scale * (-alpha + du * sd * z);
                }
            }
        }
        let (grads, _) = self.actor.backward(&actor_cache, &grad);
        self.actor_opt.step_mlp(&mut self.actor, &grads)?;

        // temperature: minimize −log α · E[log π + H̄]
        let mean_log_prob = sample.log_prob.iter().sum::<f64>() / n as f64;
        let mut la = [self.log_alpha];
        self.alpha_opt
            .step_slice(&mut la, &[-(mean_log_prob + self.target_entropy)])?;
        self.log_alpha = la[0];

        let tau = self.config.tau;
        for (t, c) in self.critic_targets.iter_mut().zip(&self.critics) {
            t.soft_update(c, tau);
        }
        Ok(UpdateStats {
            critic_loss,
            actor_loss: Some(actor_loss),
            temperature: Some(self.temperature()),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critics.iter().all(Mlp::is_finite) && self.log_alpha.is_finite()
    }

    pub(crate) fn save(&self, b: &mut Bundle) {
        save_net(b, "actor", &self.actor);
        save_adam(b, "actor_opt", &self.actor_opt);
        for i in 0..2 {
            save_net(b, &format!("critic{i}"), &self.critics[i]);
            save_net(b, &format!("critic{i}_target"), &self.critic_targets[i]);
            save_adam(b, &format!("critic{i}_opt"), &self.critic_opts[i]);
        }
        b.push("log_alpha", vec![1], vec![self.log_alpha]);
        save_adam(b, "alpha_opt", &self.alpha_opt);
        save_replay(b, &self.buffer);
        save_rng(b, "exploration", &self.explore_rng);
        save_rng(b, "replay", &self.replay_rng);
        b.set_meta("updates", self.updates);
        b.set_meta("skipped_updates", self.skipped_updates);
    }

    pub(crate) fn load(&mut self, b: &Bundle) -> Result<()> {
        load_net(b, "actor", &mut self.actor)?;
        load_adam(b, "actor_opt", &mut self.actor_opt)?;
        for i in 0..2 {
            load_net(b, &format!("critic{i}"), &mut self.critics[i])?;
            load_net(b, &format!("critic{i}_target"), &mut self.critic_targets[i])?;
            load_adam(b, &format!("critic{i}_opt"), &mut self.critic_opts[i])?;
        }
        self.log_alpha = b.get("log_alpha")?.1[0];
        load_adam(b, "alpha_opt", &mut self.alpha_opt)?;
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
    use crate::agents::Algorithm;
    use ndarray::array;

    fn small() -> AgentConfig {
        AgentConfig {
            algorithm: Algorithm::Sac,
            action_dim: 2,
            hidden: vec![16, 16],
            batch_size: 16,
            warmup_steps: 10,
            lr: 1e-2,
            ..AgentConfig::default()
        }
    }

    #[test]
    fn log_prob_matches_change_of_variables() {
        let raw = array![[0.2, -0.4, 0.1, -1.0]];
        let mut rng = stream_rng(3, Stream::Replay);
        let s = sample_policy(&raw, 2, &mut rng);
        let mut expected = 0.0;
        for c in 0..2 {
            let (mu, log_std) = (raw[[0, c]], raw[[0, 2 + c]]);
            let u: f64 = s.actions[[0, c]].atanh();
            let sd: f64 = f64::exp(log_std);
            let gauss = -0.5 * ((u - mu) / sd).powi(2) - log_std - 0.5 * (2.0 * std::f64::consts::PI).ln();
            expected += gauss - (1.0 - s.actions[[0, c]].powi(2) + SQUASH_EPS).ln();
        }
        assert!((s.log_prob[0] - expected).abs() < 1e-9);
    }

    #[test]
    fn temperature_falls_when_entropy_exceeds_target() {
        let mut agent = SacAgent::new(AgentConfig {
            sac_target_entropy: Some(-20.0),
            ..small()
        })
        .unwrap();
        let obs = Observation([0.0; 3]);
        let start = agent.temperature();
        for _ in 0..40 {
            let a = agent.act(&obs, false).unwrap();
            agent.observe(&obs, &a, 0.0).unwrap();
        }
        assert!(agent.temperature() < start);
    }

    #[test]
    fn learns_a_one_dimensional_bandit() {
        let mut agent = SacAgent::new(AgentConfig {
            sac_init_temperature: 0.01,
            ..small()
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
