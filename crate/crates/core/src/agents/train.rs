// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! Training loop with per-episode logging and periodic checkpoints.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Agent;
use crate::checkpoint::Bundle;
use crate::ensemble::DeviceOffsets;
use crate::env::{CalibrationEnv, Observation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub total_steps: usize,
    /// Checkpoint period in environment steps; 0 disables checkpoints.
    pub checkpoint_every: usize,
    /// Directory receiving `step_<n>/` checkpoints and `latest/`.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            total_steps: 20_000,
            checkpoint_every: 10_000,
            checkpoint_dir: None,
        }
    }
}

/// One logged training episode (the action itself is not kept).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainEpisode {
    pub episode: usize,
    pub offsets: DeviceOffsets,
    pub observation: Observation,
    pub f_oct: f64,
    pub f_rl: f64,
    pub reward: f64,
}

/// `F_RL` per training episode and its running maximum.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub episode: Vec<usize>,
    pub f_rl: Vec<f64>,
    pub running_best: Vec<f64>,
}

impl LearningCurve {
    pub fn len(&self) -> usize {
        self.episode.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episode.is_empty()
    }

    pub fn push(&mut self, episode: usize, f_rl: f64) {
        let best = self.running_best.last().map_or(f_rl, |b| b.max(f_rl));
        self.episode.push(episode);
        self.f_rl.push(f_rl);
        self.running_best.push(best);
    }

    /// Mean `F_RL` over the last `window` episodes.
    pub fn tail_mean(&self, window: usize) -> f64 {
        let w = window.min(self.f_rl.len()).max(1);
        self.f_rl[self.f_rl.len().saturating_sub(w)..].iter().sum::<f64>() / w as f64
    }
}

/// Everything a training run produced so far.
#[derive(Debug, Clone, Default)]
pub struct TrainProgress {
    pub episodes: Vec<TrainEpisode>,
    pub curve: LearningCurve,
}

const EPISODE_COLUMNS: usize = 9;

impl TrainProgress {
    fn push(&mut self, e: TrainEpisode) {
        self.curve.push(e.episode, e.f_rl);
        self.episodes.push(e);
    }

    fn save(&self, b: &mut Bundle) {
        let mut flat = Vec::with_capacity(self.episodes.len() * EPISODE_COLUMNS);
        for e in &self.episodes {
            flat.extend_from_slice(&e.offsets.as_array());
            flat.extend_from_slice(&e.observation.0);
            flat.extend_from_slice(&[e.f_oct, e.f_rl, e.reward]);
        }
        b.push("log.episodes", vec![self.episodes.len(), EPISODE_COLUMNS], flat);
    }

    fn load(b: &Bundle) -> Result<Self> {
        let (shape, flat) = b.get("log.episodes")?;
        if shape.len() != 2 || shape[1] != EPISODE_COLUMNS || flat.len() != shape[0] * EPISODE_COLUMNS {
            return Err(Error::Checkpoint("episode log shape mismatch".into()));
        }
        let mut progress = Self::default();
        for (i, row) in flat.chunks_exact(EPISODE_COLUMNS).enumerate() {
            progress.push(TrainEpisode {
                episode: i,
                offsets: DeviceOffsets {
                    d_omega1: row[0],
                    d_omega2: row[1],
                    d_g: row[2],
                },
                observation: Observation([row[3], row[4], row[5]]),
                f_oct: row[6],
                f_rl: row[7],
                reward: row[8],
            });
        }
        Ok(progress)
    }
}

/// Full resumable state: agent, environment stream positions and the log.
pub fn training_bundle(agent: &Agent, env: &CalibrationEnv, progress: &TrainProgress) -> Bundle {
    let mut b = agent.to_bundle();
    let (device, estimation) = env.rng_positions();
    b.set_meta("rng.env_device", device);
    b.set_meta("rng.env_estimation", estimation);
    b.set_meta("episode", progress.episodes.len());
    progress.save(&mut b);
    b
}

/// Restores agent, environment streams and log from a training checkpoint.
pub fn resume(dir: &Path, env: &mut CalibrationEnv) -> Result<(Agent, TrainProgress)> {
    let b = Bundle::load(dir)?;
    let agent = Agent::from_bundle(&b)?;
    env.set_rng_positions(b.meta_parse("rng.env_device")?, b.meta_parse("rng.env_estimation")?);
    let progress = TrainProgress::load(&b)?;
    if progress.episodes.len() != b.meta_parse::<usize>("episode")? {
        return Err(Error::Checkpoint("episode count disagrees with log".into()));
    }
    Ok((agent, progress))
}

/// Runs episodes until `opts.total_steps` have been logged in `progress`.
///
/// Fails with [`Error::Numerical`] on a non-finite loss, reward or network.
pub fn train(
    agent: &mut Agent,
    env: &mut CalibrationEnv,
    opts: &TrainOptions,
    progress: &mut TrainProgress,
) -> Result<()> {
    if agent.config().action_dim != env.action_dim() {
        return Err(Error::DimensionMismatch {
            expected: env.action_dim(),
            actual: agent.config().action_dim,
        });
    }
    while progress.episodes.len() < opts.total_steps {
        let episode = progress.episodes.len();
        let pending = env.begin()?;
        let obs = pending.observation;
        let action = agent.act(&obs, false)?;
        let record = env.finish(pending, action)?;
        if !record.reward.is_finite() {
            return Err(Error::Numerical(format!("non-finite reward at episode {episode}")));
        }
        agent.observe(&obs, &record.action, record.reward)?;
        progress.push(TrainEpisode {
            episode,
            offsets: record.offsets,
            observation: record.observation,
            f_oct: record.f_oct,
            f_rl: record.f_rl,
            reward: record.reward,
        });
        let done = episode + 1;
        if done % 1000 == 0 {
            if !agent.is_finite() {
                return Err(Error::Numerical(format!("non-finite parameters after {done} steps")));
            }
            log::info!(
                "{} step {done}: mean F_RL over last 1000 = {:.4}",
                agent.algorithm(),
                progress.curve.tail_mean(1000)
            );
        }
        if let Some(dir) = &opts.checkpoint_dir {
            if opts.checkpoint_every > 0 && done % opts.checkpoint_every == 0 {
                let bundle = training_bundle(agent, env, progress);
                bundle.save(&dir.join(format!("step_{done}")))?;
                bundle.save(&dir.join("latest"))?;
            }
        }
    }
    Ok(())
}
