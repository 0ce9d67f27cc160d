// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};

/// Ring buffer of `(observation, action, reward)` triples.
///
/// Episodes are single bandit steps, so no next observation is ever stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    obs_dim: usize,
    action_dim: usize,
    capacity: usize,
    observations: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next: usize,
    size: usize,
}

/// A sampled minibatch, one transition per row.
#[derive(Debug, Clone)]
pub struct Batch {
    pub observations: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Vec<f64>,
    pub indices: Vec<usize>,
}

impl ReplayBuffer {
    pub fn new(obs_dim: usize, action_dim: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("replay capacity must be >= 1".into()));
        }
        Ok(Self {
            obs_dim,
            action_dim,
            capacity,
            observations: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next: 0,
            size: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, obs: &[f64], action: &[f64], reward: f64) -> Result<()> {
        if obs.len() != self.obs_dim || action.len() != self.action_dim {
            return Err(Error::DimensionMismatch {
                expected: self.obs_dim + self.action_dim,
                actual: obs.len() + action.len(),
            });
        }
        if self.size < self.capacity {
            self.observations.extend_from_slice(obs);
            self.actions.extend_from_slice(action);
            self.rewards.push(reward);
            self.size += 1;
        } else {
            let i = self.next;
            self.observations[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(obs);
            self.actions[i * self.action_dim..(i + 1) * self.action_dim].copy_from_slice(action);
            self.rewards[i] = reward;
        }
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    /// Uniform sampling with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch> {
        if self.size == 0 {
            return Err(Error::InvalidParameter("cannot sample an empty buffer".into()));
        }
        let indices: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..self.size)).collect();
        let mut observations = Array2::zeros((batch_size, self.obs_dim));
        let mut actions = Array2::zeros((batch_size, self.action_dim));
        let mut rewards = Vec::with_capacity(batch_size);
        for (row, &i) in indices.iter().enumerate() {
            for c in 0..self.obs_dim {
                observations[[row, c]] = self.observations[i * self.obs_dim + c];
            }
            for c in 0..self.action_dim {
                actions[[row, c]] = self.actions[i * self.action_dim + c];
            }
            rewards.push(self.rewards[i]);
        }
        Ok(Batch {
            observations,
            actions,
            rewards,
            indices,
        })
    }

    pub(crate) fn raw_parts(&self) -> (&[f64], &[f64], &[f64], usize) {
        (&self.observations, &self.actions, &self.rewards, self.next)
    }

    pub(crate) fn restore(
        &mut self,
        observations: Vec<f64>,
        actions: Vec<f64>,
        rewards: Vec<f64>,
        next: usize,
    ) -> Result<()> {
        let size = rewards.len();
        if size > self.capacity
            || observations.len() != size * self.obs_dim
            || actions.len() != size * self.action_dim
            || next >= self.capacity
        {
            return Err(Error::Checkpoint("replay buffer shape mismatch".into()));
        }
        self.observations = observations;
        self.actions = actions;
        self.rewards = rewards;
        self.size = size;
        self.next = next;
        Ok(())
    }
}
