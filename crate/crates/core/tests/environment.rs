// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use quditcal::dynamics::{DeviceParams, Gate};
use quditcal::ensemble::{apply_offsets, sample_offsets, DeviceOffsets, NoiseConfig};
use quditcal::env::{compose_pulse, make_observation, residual_from_action, CalibrationEnv, CosineBasis, EnvConfig, EnvSettings};
use quditcal::grape::{init_pulse, GrapeConfig};
use quditcal::rng::{stream_rng, Stream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn env_config(settings: EnvSettings) -> EnvConfig {
    EnvConfig {
        settings,
        noise: NoiseConfig::default(),
        baseline: init_pulse(&GrapeConfig::default()).unwrap(),
        nominal: DeviceParams::default(),
        target: Gate::Cz3.matrix(),
    }
}

fn pstd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

#[test]
fn offset_statistics_match_the_noise_model() {
    let cfg = NoiseConfig::default();
    let mut rng = stream_rng(0, Stream::Device);
    let samples: Vec<DeviceOffsets> = (0..100_000).map(|_| sample_offsets(&mut rng, &cfg)).collect();
    let columns: Vec<Vec<f64>> = (0..3).map(|i| samples.iter().map(|s| s.as_array()[i]).collect()).collect();
    let sigmas = [cfg.sigma_omega, cfg.sigma_omega, cfg.sigma_g];
    let mut outside = 0usize;
    for (col, sigma) in columns.iter().zip(sigmas) {
        let (_, s) = pstd(col);
        assert!((s / sigma - 1.0).abs() <= 0.02, "std {s} vs {sigma}");
        outside += col.iter().filter(|x| x.abs() > 3.0 * sigma).count();
    }
    let fraction = outside as f64 / (3.0 * 100_000.0);
    assert!((fraction - 0.0027).abs() <= 0.0016, "outside fraction {fraction}");

    let (m1, s1) = pstd(&columns[0]);
    let (mg, sg) = pstd(&columns[2]);
    let cov = columns[0].iter().zip(&columns[2]).map(|(a, b)| (a - m1) * (b - mg)).sum::<f64>() / 100_000.0;
    assert!((cov / (s1 * sg)).abs() <= 0.01);
}

#[test]
fn offsets_leave_anharmonicities_alone() {
    let nominal = DeviceParams::default();
    let p = apply_offsets(
        &nominal,
        &DeviceOffsets {
            d_omega1: 0.01,
            d_omega2: -0.02,
            d_g: 1e-4,
        },
    );
    assert_eq!((p.chi1, p.chi2), (nominal.chi1, nominal.chi2));
    assert_eq!((p.omega1, p.omega2, p.g), (nominal.omega1 + 0.01, nominal.omega2 - 0.02, nominal.g + 1e-4));
}

#[test]
fn cosine_basis_is_orthonormal() {
    let basis = CosineBasis::new(160, 20).unwrap();
    for a in 0..20 {
        for b in 0..20 {
            let dot: f64 = (0..160).map(|j| basis.get(j, a) * basis.get(j, b)).sum();
            let expected = if a == b { 1.0 } else { 0.0 };
            assert!((dot - expected).abs() <= 1e-12);
        }
    }
}

#[test]
fn zero_action_gives_exactly_zero_reward() {
    let mut env = CalibrationEnv::new(env_config(EnvSettings::default()), 11).unwrap();
    for _ in 0..100 {
        let r = env.episode(|_| vec![0.0; 40]).unwrap();
        assert_eq!(r.reward, 0.0);
        assert_eq!(r.f_rl, r.f_oct);
    }
}

#[test]
fn reward_is_the_fidelity_difference() {
    let mut env = CalibrationEnv::new(env_config(EnvSettings::default()), 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let action: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let r = env.episode(|_| action.clone()).unwrap();
        assert!((r.reward - (r.f_rl - r.f_oct)).abs() <= 1e-14);
    }
}

#[test]
fn estimation_noise_never_reaches_the_dynamics() {
    let noisy = EnvSettings {
        est_eta_omega: 5e-4,
        est_eta_g: 2e-5,
        ..EnvSettings::default()
    };
    let mut clean = CalibrationEnv::new(env_config(EnvSettings::default()), 3).unwrap();
    let mut blurred = CalibrationEnv::new(env_config(noisy), 3).unwrap();
    let fixed: Vec<f64> = (0..40).map(|i| ((i as f64) * 0.37).sin()).collect();
    for _ in 0..10 {
        let a = clean.episode(|_| fixed.clone()).unwrap();
        let b = blurred.episode(|_| fixed.clone()).unwrap();
        assert_eq!(a.offsets, b.offsets);
        assert_eq!((a.f_oct, a.f_rl), (b.f_oct, b.f_rl));
        assert_ne!(a.observation, b.observation);
    }
}

#[test]
fn relative_estimation_noise_sets_observation_spread() {
    let settings = EnvSettings {
        est_eta_omega: 0.1 * NoiseConfig::default().sigma_omega,
        ..EnvSettings::default()
    };
    let noise = NoiseConfig::default();
    let mut rng = stream_rng(8, Stream::Estimation);
    let o1: Vec<f64> = (0..10_000)
        .map(|_| make_observation(&DeviceOffsets::ZERO, &settings, &noise, &mut rng).unwrap().0[0])
        .collect();
    let (_, s) = pstd(&o1);
    assert!((s - 0.1).abs() <= 0.003, "std {s}");
}

#[test]
fn episodes_are_deterministic() {
    let run = || {
        let mut env = CalibrationEnv::new(env_config(EnvSettings::default()), 21).unwrap();
        (0..5)
            .map(|_| env.episode(|o| o.0.iter().cycle().take(40).map(|v| v / 3.0).collect()).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composed_pulses_respect_the_bound(
        action in prop::collection::vec(-1.5..1.5f64, 40),
        alpha in 0.0..2.0f64,
    ) {
        let basis = CosineBasis::new(160, 20).unwrap();
        let baseline = init_pulse(&GrapeConfig::default()).unwrap();
        let mut clamped = 0;
        let residual = residual_from_action(&action, &basis, alpha.max(1e-9), &mut clamped).unwrap();
        let pulse = compose_pulse(&baseline, &residual, 0.3).unwrap();
        prop_assert!(pulse.channels.iter().flatten().all(|v| v.abs() <= 0.3));
        prop_assert_eq!(clamped as usize, action.iter().filter(|a| a.abs() > 1.0).count());
    }
}
