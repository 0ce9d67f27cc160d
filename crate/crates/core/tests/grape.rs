// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use quditcal::dynamics::{DeviceParams, Gate, PulseSet, System};
use quditcal::grape::{fidelity_and_gradient, grape_optimize, infidelity, GrapeConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central differences of the fidelity with respect to every amplitude.
fn finite_difference(system: &System, pulse: &PulseSet, target: &quditcal::dynamics::ComplexMatrix) -> [Vec<f64>; 2] {
    let h = 1e-6;
    let mut out = [vec![0.0; pulse.n_slices()], vec![0.0; pulse.n_slices()]];
    for c in 0..2 {
        for j in 0..pulse.n_slices() {
            let mut plus = pulse.clone();
            let mut minus = pulse.clone();
            plus.channels[c][j] += h;
            minus.channels[c][j] -= h;
            let fp = 1.0 - infidelity(system, &plus, target).unwrap();
            let fm = 1.0 - infidelity(system, &minus, target).unwrap();
            out[c][j] = (fp - fm) / (2.0 * h);
        }
    }
    out
}

#[test]
fn gradient_matches_central_differences_on_twenty_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for instance in 0..20 {
        let n = 8;
        let params = DeviceParams {
            omega1: rng.random_range(0.8..1.2),
            omega2: rng.random_range(0.9..1.3),
            chi1: rng.random_range(-0.3..-0.01),
            chi2: rng.random_range(-0.3..-0.01),
            g: rng.random_range(0.001..0.05),
        };
        let ch = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.random_range(-0.3..0.3)).collect::<Vec<f64>>();
        let pulse = PulseSet::new(rng.random_range(1.0..15.0), 0.3, [ch(&mut rng), ch(&mut rng)]).unwrap();
        let target = if instance % 3 == 0 { Gate::Alt } else { Gate::Cz3 }.matrix();
        let system = System::new(&params);
        let (_, analytic) = fidelity_and_gradient(&system, &pulse, &target).unwrap();
        let numeric = finite_difference(&system, &pulse, &target);
        let scale = numeric.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = analytic
            .iter()
            .flatten()
            .zip(numeric.iter().flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(err / scale);
    }
    assert!(worst <= 1e-6, "worst relative error {worst:e}");
}

fn short_config(seed: u64) -> GrapeConfig {
    GrapeConfig {
        n_slices: 8,
        total_time: 80.0,
        max_iterations: 40,
        seed,
        ..GrapeConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn history_is_monotone_and_pulse_bounded(seed in 0u64..1000, alt in any::<bool>()) {
        let target = if alt { Gate::Alt } else { Gate::Cz3 }.matrix();
        let r = grape_optimize(&short_config(seed), &DeviceParams::default(), &target).unwrap();
        prop_assert!(r.infidelity_history.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        prop_assert!(r.pulse.channels.iter().flatten().all(|v| v.abs() <= r.pulse.amp_bound));
        prop_assert_eq!(r.iterations_used, r.infidelity_history.len());
    }

    #[test]
    fn optimization_is_deterministic(seed in 0u64..1000) {
        let target = Gate::Cz3.matrix();
        let a = grape_optimize(&short_config(seed), &DeviceParams::default(), &target).unwrap();
        let b = grape_optimize(&short_config(seed), &DeviceParams::default(), &target).unwrap();
        prop_assert_eq!(a, b);
    }
}
