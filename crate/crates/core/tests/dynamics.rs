// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use quditcal::dynamics::{
    avg_gate_fidelity, herm_expm, target_alt, target_cz3, unitarity_defect, ComplexMatrix, DeviceParams, PulseSet,
    System, HILBERT_DIM,
};

fn params_strategy() -> impl Strategy<Value = DeviceParams> {
    (0.5..1.5f64, 0.5..1.5f64, -0.3..0.0f64, -0.3..0.0f64, 0.0..0.01f64).prop_map(|(omega1, omega2, chi1, chi2, g)| {
        DeviceParams {
            omega1,
            omega2,
            chi1,
            chi2,
            g,
        }
    })
}

fn pulse_strategy(max_slices: usize) -> impl Strategy<Value = PulseSet> {
    (1..=max_slices, 0.1..20.0f64).prop_flat_map(|(n, dt)| {
        (
            prop::collection::vec(-0.3..0.3f64, n),
            prop::collection::vec(-0.3..0.3f64, n),
        )
            .prop_map(move |(a, b)| PulseSet::new(dt, 0.3, [a, b]).unwrap())
    })
}

fn random_hermitian(entries: &[f64]) -> ComplexMatrix {
    let d = HILBERT_DIM;
    let mut h = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            let (re, im) = (entries[k], entries[k + 1]);
            k += 2;
            if i == j {
                h[(i, i)] = Complex64::new(re, 0.0);
            } else {
                h[(i, j)] = Complex64::new(re, im);
                h[(j, i)] = Complex64::new(re, -im);
            }
        }
    }
    h
}

/// Scaling-and-squaring Taylor series, independent of the eigensolver.
fn taylor_expm(h: &ComplexMatrix, t: f64) -> ComplexMatrix {
    let d = h.nrows();
    let a = h * Complex64::new(0.0, -t);
    let norm = a.iter().map(|z| z.norm()).fold(0.0, f64::max) * d as f64;
    let squarings = norm.max(1.0).log2().ceil() as u32 + 4;
    let scaled = &a / Complex64::new(2f64.powi(squarings as i32), 0.0);
    let mut term = DMatrix::<Complex64>::identity(d, d);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &scaled / Complex64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn fidelity_identities() {
    let id = DMatrix::<Complex64>::identity(9, 9);
    let cz3 = target_cz3();
    assert!((avg_gate_fidelity(&cz3, &cz3).unwrap() - 1.0).abs() <= 1e-12);
    assert!((avg_gate_fidelity(&id, &cz3).unwrap() - 0.2).abs() <= 1e-12);
    assert!((avg_gate_fidelity(&id, &target_alt()).unwrap() - 58.0 / 90.0).abs() <= 1e-12);
}

#[test]
fn expm_matches_taylor_oracle() {
    let mut state = 12345u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    for _ in 0..20 {
        let entries: Vec<f64> = (0..90).map(|_| next()).collect();
        let h = random_hermitian(&entries);
        let u = herm_expm(&h, 10.0).unwrap();
        assert!(max_abs_diff(&u, &taylor_expm(&h, 10.0)) < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn propagators_are_unitary(params in params_strategy(), pulse in pulse_strategy(24)) {
        let u = System::new(&params).propagate(&pulse).unwrap();
        prop_assert!(unitarity_defect(&u) <= 1e-10);
    }

    #[test]
    fn propagation_composes(params in params_strategy(), pulse in pulse_strategy(24)) {
        let n = pulse.n_slices();
        prop_assume!(n >= 2);
        let half = n / 2;
        let split = |range: std::ops::Range<usize>| PulseSet::new(
            pulse.dt,
            pulse.amp_bound,
            [pulse.channels[0][range.clone()].to_vec(), pulse.channels[1][range].to_vec()],
        ).unwrap();
        let sys = System::new(&params);
        let whole = sys.propagate(&pulse).unwrap();
        let first = sys.propagate(&split(0..half)).unwrap();
        let last = sys.propagate(&split(half..n)).unwrap();
        prop_assert!(max_abs_diff(&whole, &(last * first)) <= 1e-11);
    }

    #[test]
    fn fidelity_is_phase_invariant_and_bounded(
        params in params_strategy(),
        pulse in pulse_strategy(12),
        phi in 0.0..std::f64::consts::TAU,
    ) {
        let u = System::new(&params).propagate(&pulse).unwrap();
        for target in [target_cz3(), target_alt()] {
            let f = avg_gate_fidelity(&u, &target).unwrap();
            let rotated = &u * Complex64::from_polar(1.0, phi);
            prop_assert!((avg_gate_fidelity(&rotated, &target).unwrap() - f).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn expm_is_a_one_parameter_group(
        entries in prop::collection::vec(-1.0..1.0f64, 90),
        s in -5.0..5.0f64,
        t in -5.0..5.0f64,
    ) {
        let h = random_hermitian(&entries);
        let lhs = herm_expm(&h, s + t).unwrap();
        let rhs = herm_expm(&h, s).unwrap() * herm_expm(&h, t).unwrap();
        prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-11);
    }
}
