// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use quditcal::agents::{
    policy_export, policy_import, resume, train, Agent, AgentConfig, Algorithm, LearningCurve, ReplayBuffer,
    TrainOptions, TrainProgress,
};
use quditcal::dynamics::{DeviceParams, Gate, PulseSet};
use quditcal::ensemble::NoiseConfig;
use quditcal::env::{CalibrationEnv, EnvConfig, EnvSettings, Observation};
use quditcal::rng::{stream_rng, Stream};

const SEED: u64 = 17;

fn small_env() -> CalibrationEnv {
    let config = EnvConfig {
        settings: EnvSettings {
            k: 2,
            ..EnvSettings::default()
        },
        noise: NoiseConfig::default(),
        baseline: PulseSet::new(
            20.0,
            0.3,
            [
                vec![0.1, -0.05, 0.2, 0.0, 0.05, 0.1],
                vec![0.0, 0.1, 0.1, -0.2, 0.15, -0.1],
            ],
        )
        .unwrap(),
        nominal: DeviceParams::default(),
        target: Gate::Cz3.matrix(),
    };
    CalibrationEnv::new(config, SEED).unwrap()
}

fn small_agent(algorithm: Algorithm) -> Agent {
    Agent::new(AgentConfig {
        algorithm,
        action_dim: 4,
        hidden: vec![16, 16],
        batch_size: 8,
        warmup_steps: 10,
        ppo_rollout: 16,
        ppo_minibatch: 8,
        ppo_epochs: 2,
        seed: SEED,
        ..AgentConfig::default()
    })
    .unwrap()
}

fn probe_actions(agent: &Agent) -> Vec<Vec<f64>> {
    let policy = agent.policy();
    [[0.0, 0.0, 0.0], [1.0, -0.5, 2.0], [-3.0, 3.0, 0.25]]
        .iter()
        .map(|o| policy.act(&Observation(*o)).unwrap())
        .collect()
}

fn run(algorithm: Algorithm, steps: usize) -> (Agent, TrainProgress) {
    let mut agent = small_agent(algorithm);
    let mut env = small_env();
    let mut progress = TrainProgress::default();
    let opts = TrainOptions {
        total_steps: steps,
        checkpoint_every: 0,
        checkpoint_dir: None,
    };
    train(&mut agent, &mut env, &opts, &mut progress).unwrap();
    (agent, progress)
}

#[test]
fn training_is_deterministic_for_every_algorithm() {
    for alg in Algorithm::ALL {
        let (a, pa) = run(alg, 40);
        let (b, pb) = run(alg, 40);
        assert_eq!(pa.episodes, pb.episodes, "{alg}");
        assert_eq!(probe_actions(&a), probe_actions(&b), "{alg}");
    }
}

#[test]
fn resumed_training_matches_uninterrupted_training() {
    for alg in Algorithm::ALL {
        let (full_agent, full) = run(alg, 48);

        let dir = tempfile::tempdir().unwrap();
        let mut agent = small_agent(alg);
        let mut env = small_env();
        let mut progress = TrainProgress::default();
        let opts = TrainOptions {
            total_steps: 24,
            checkpoint_every: 24,
            checkpoint_dir: Some(dir.path().to_path_buf()),
        };
        train(&mut agent, &mut env, &opts, &mut progress).unwrap();
        drop((agent, env, progress));

        let mut env = small_env();
        let (mut agent, mut progress) = resume(&dir.path().join("latest"), &mut env).unwrap();
        assert_eq!(progress.episodes.len(), 24);
        let rest = TrainOptions {
            total_steps: 48,
            checkpoint_every: 0,
            checkpoint_dir: None,
        };
        train(&mut agent, &mut env, &rest, &mut progress).unwrap();

        assert_eq!(progress.episodes, full.episodes, "{alg}");
        assert_eq!(progress.curve, full.curve, "{alg}");
        assert_eq!(probe_actions(&agent), probe_actions(&full_agent), "{alg}");
    }
}

#[test]
fn exported_policy_round_trips() {
    for alg in Algorithm::ALL {
        let (agent, _) = run(alg, 20);
        let dir = tempfile::tempdir().unwrap();
        policy_export(&agent, dir.path()).unwrap();
        let policy = policy_import(dir.path()).unwrap();
        let obs = Observation([0.3, -1.2, 2.5]);
        assert_eq!(policy.act(&obs).unwrap(), agent.policy().act(&obs).unwrap(), "{alg}");
        assert!(policy.act(&obs).unwrap().iter().all(|a| a.abs() <= 1.0));
    }
}

#[test]
fn replay_sampling_is_uniform() {
    let n = 50;
    let mut buffer = ReplayBuffer::new(3, 1, n).unwrap();
    for i in 0..n {
        buffer.push(&[i as f64, 0.0, 0.0], &[0.0], 0.0).unwrap();
    }
    let mut rng = stream_rng(4, Stream::Replay);
    let mut counts = vec![0usize; n];
    for _ in 0..400 {
        for i in buffer.sample(256, &mut rng).unwrap().indices {
            counts[i] += 1;
        }
    }
    let expected = (400 * 256) as f64 / n as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 49 degrees of freedom, upper 0.1% point.
    assert!(chi2 < 85.35, "chi2 {chi2}");
}

proptest! {
    #[test]
    fn running_best_is_monotone_and_tight(f in prop::collection::vec(0.0..1.0f64, 1..200)) {
        let mut curve = LearningCurve::default();
        for (i, &v) in f.iter().enumerate() {
            curve.push(i, v);
        }
        for i in 0..f.len() {
            prop_assert!(curve.running_best[i] >= f[i]);
            if i > 0 {
                prop_assert!(curve.running_best[i] >= curve.running_best[i - 1]);
            }
            let prefix_max = f[..=i].iter().cloned().fold(f64::MIN, f64::max);
            prop_assert_eq!(curve.running_best[i], prefix_max);
        }
    }
}
