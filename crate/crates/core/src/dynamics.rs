// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! Closed-system dynamics of two coupled transmon-like qutrits.
//!
//! The drift Hamiltonian is
//!
//! ```text
//! H0 = Σ_i (ω_i n_i + χ_i a_i†² a_i²) + g (a_1 + a_1†)(a_2 + a_2†)
//! ```
//!
//! and each drive channel couples through `H_c,i = a_i + a_i†`. Controls are
//! piecewise constant, so the gate is an ordered product of slice
//! exponentials, each evaluated exactly from a Hermitian eigendecomposition.
//! Slices are long compared to the bare oscillation period, which rules out
//! series or splitting approximations.
//!
//! Basis states are ordered lexicographically, `|q1 q2>` with `q1` the slow
//! index: index = 3·q1 + q2.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Levels kept per transmon.
pub const QUTRIT_DIM: usize = 3;
/// Dimension of the two-qutrit Hilbert space.
pub const HILBERT_DIM: usize = QUTRIT_DIM * QUTRIT_DIM;

const HERMITIAN_TOL: f64 = 1e-12;

/// Hamiltonian parameters `(ω1, ω2, χ1, χ2, g)` in dimensionless
/// angular-frequency units (ħ = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    pub omega1: f64,
    pub omega2: f64,
    pub chi1: f64,
    pub chi2: f64,
    pub g: f64,
}

impl Default for DeviceParams {
    /// Weakly anharmonic, detuned nominal pair with `g = 0.0025`.
    fn default() -> Self {
        Self {
            omega1: 1.0,
            omega2: 1.1,
            chi1: -0.15,
            chi2: -0.15,
            g: 0.0025,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.omega1, self.omega2, self.chi1, self.chi2, self.g];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "device parameters must be finite: {self:?}"
            )));
        }
        if self.g <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "coupling g must be positive, got {}",
                self.g
            )));
        }
        Ok(())
    }
}

/// Two-channel piecewise-constant drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSet {
    pub dt: f64,
    pub amp_bound: f64,
    pub channels: [Vec<f64>; 2],
}

impl PulseSet {
    pub fn new(dt: f64, amp_bound: f64, channels: [Vec<f64>; 2]) -> Result<Self> {
        let pulse = Self {
            dt,
            amp_bound,
            channels,
        };
        pulse.validate()?;
        Ok(pulse)
    }

    pub fn zeros(n_slices: usize, dt: f64, amp_bound: f64) -> Result<Self> {
        Self::new(dt, amp_bound, [vec![0.0; n_slices], vec![0.0; n_slices]])
    }

    pub fn n_slices(&self) -> usize {
        self.channels[0].len()
    }

    pub fn total_time(&self) -> f64 {
        self.n_slices() as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.channels[0].len();
        if n == 0 {
            return Err(Error::InvalidDimension("pulse has no slices".into()));
        }
        if self.channels[1].len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: self.channels[1].len(),
            });
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "slice duration must be positive, got {}",
                self.dt
            )));
        }
        if !(self.amp_bound.is_finite() && self.amp_bound > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "amplitude bound must be positive, got {}",
                self.amp_bound
            )));
        }
        for (c, channel) in self.channels.iter().enumerate() {
            for (j, &v) in channel.iter().enumerate() {
                if !v.is_finite() || v.abs() > self.amp_bound {
                    return Err(Error::InvalidParameter(format!(
                        "channel {} slice {j}: amplitude {v} outside ±{}",
                        c + 1,
                        self.amp_bound
                    )));
                }
            }
        }
        Ok(())
    }

    /// Flattened amplitudes, channel 1 followed by channel 2.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.channels[0].clone();
        out.extend_from_slice(&self.channels[1]);
        out
    }

    pub fn from_flat(flat: &[f64], dt: f64, amp_bound: f64) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::InvalidDimension(format!(
                "flat pulse length {} is odd",
                flat.len()
            )));
        }
        let n = flat.len() / 2;
        Self::new(
            dt,
            amp_bound,
            [flat[..n].to_vec(), flat[n..].to_vec()],
        )
    }
}

/// Truncated annihilation operator: `<k-1|a|k> = √k`.
pub fn ladder_op(dim: usize) -> Result<ComplexMatrix> {
    if dim < 2 {
        return Err(Error::InvalidDimension(format!(
            "ladder operator needs dim >= 2, got {dim}"
        )));
    }
    let mut a = ComplexMatrix::zeros(dim, dim);
    for k in 1..dim {
        a[(k - 1, k)] = Complex64::new((k as f64).sqrt(), 0.0);
    }
    Ok(a)
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

fn qutrit_ops() -> (ComplexMatrix, ComplexMatrix, ComplexMatrix) {
    let a = ladder_op(QUTRIT_DIM).expect("qutrit dimension is valid");
    let ad = a.adjoint();
    let n = &ad * &a;
    let quartic = &ad * &ad * &a * &a;
    (a, n, quartic)
}

/// Drift Hamiltonian `H0(λ)` on the 9-dimensional product space.
pub fn build_drift(params: &DeviceParams) -> ComplexMatrix {
    let (a, n, quartic) = qutrit_ops();
    let id = ComplexMatrix::identity(QUTRIT_DIM, QUTRIT_DIM);
    let x = &a + a.adjoint();
    let re = |v: f64| Complex64::new(v, 0.0);

    let local1 = n.map(|z| z * params.omega1) + quartic.map(|z| z * params.chi1);
    let local2 = n.map(|z| z * params.omega2) + quartic.map(|z| z * params.chi2);
    let h = kron(&local1, &id) + kron(&id, &local2) + kron(&x, &x) * re(params.g);
    hermitian_part(&h)
}

/// Control operators `(H_c,1, H_c,2) = ((a+a†)⊗I, I⊗(a+a†))`.
pub fn build_control_ops() -> [ComplexMatrix; 2] {
    let a = ladder_op(QUTRIT_DIM).expect("qutrit dimension is valid");
    let x = &a + a.adjoint();
    let id = ComplexMatrix::identity(QUTRIT_DIM, QUTRIT_DIM);
    [kron(&x, &id), kron(&id, &x)]
}

/// Number operator of qutrit `which` (0 or 1) on the product space.
pub fn number_op(which: usize) -> ComplexMatrix {
    let (_, n, _) = qutrit_ops();
    let id = ComplexMatrix::identity(QUTRIT_DIM, QUTRIT_DIM);
    if which == 0 {
        kron(&n, &id)
    } else {
        kron(&id, &n)
    }
}

fn hermitian_part(h: &ComplexMatrix) -> ComplexMatrix {
    (h + h.adjoint()).map(|z| z * 0.5)
}

/// Largest entrywise deviation of `h` from Hermiticity.
pub fn hermitian_defect(h: &ComplexMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            worst = worst.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Real spectrum and eigenvectors (columns) of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: DVector<f64>,
    pub vectors: ComplexMatrix,
}

/// Eigendecomposition of `h` after symmetrizing it; rejects inputs whose
/// asymmetry exceeds `1e-12` relative to `max(1, max|h_ij|)`.
pub fn hermitian_spectrum(h: &ComplexMatrix) -> Result<Spectrum> {
    if h.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch {
            expected: h.nrows(),
            actual: h.ncols(),
        });
    }
    let scale = h.iter().fold(1.0_f64, |m, z| m.max(z.norm()));
    let defect = hermitian_defect(h);
    if !(defect <= HERMITIAN_TOL * scale) {
        return Err(Error::NotHermitian(defect));
    }
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("non-finite Hamiltonian entry".into()));
    }
    let eig = SymmetricEigen::new(hermitian_part(h));
    Ok(Spectrum {
        values: eig.eigenvalues,
        vectors: eig.eigenvectors,
    })
}

impl Spectrum {
    /// `exp(-i·H·t)` from the stored decomposition.
    pub fn expm(&self, t: f64) -> ComplexMatrix {
        let phases = self.phases(t);
        let mut scaled = self.vectors.clone();
        for (mut col, phase) in scaled.column_iter_mut().zip(phases.iter()) {
            col *= *phase;
        }
        scaled * self.vectors.adjoint()
    }

    /// `e^{-iλ_m t}` for every eigenvalue.
    pub fn phases(&self, t: f64) -> Vec<Complex64> {
        self.values
            .iter()
            .map(|&l| Complex64::from_polar(1.0, -l * t))
            .collect()
    }
}

/// `exp(-iHt)` for Hermitian `H`.
pub fn herm_expm(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    Ok(hermitian_spectrum(h)?.expm(t))
}

/// Drift plus control operators for one device, reused across slices.
#[derive(Debug, Clone)]
pub struct System {
    pub drift: ComplexMatrix,
    pub controls: [ComplexMatrix; 2],
}

impl System {
    pub fn new(params: &DeviceParams) -> Self {
        Self {
            drift: build_drift(params),
            controls: build_control_ops(),
        }
    }

    /// `H^(j) = H0 + ε1 H_c,1 + ε2 H_c,2`.
    pub fn slice_hamiltonian(&self, eps1: f64, eps2: f64) -> ComplexMatrix {
        let mut h = self.drift.clone();
        h.zip_zip_apply(&self.controls[0], &self.controls[1], |hij, c1, c2| {
            *hij += c1 * eps1 + c2 * eps2;
        });
        h
    }

    pub fn slice_spectrum(&self, pulse: &PulseSet, j: usize) -> Result<Spectrum> {
        hermitian_spectrum(&self.slice_hamiltonian(pulse.channels[0][j], pulse.channels[1][j]))
    }

    /// Slice propagators `U_j = exp(-i H^(j) Δt)` in time order.
    pub fn slice_propagators(&self, pulse: &PulseSet) -> Result<Vec<ComplexMatrix>> {
        (0..pulse.n_slices())
            .map(|j| Ok(self.slice_spectrum(pulse, j)?.expm(pulse.dt)))
            .collect()
    }

    /// Full gate `U = U_{N-1} ⋯ U_1 U_0` (last slice leftmost).
    pub fn propagate(&self, pulse: &PulseSet) -> Result<ComplexMatrix> {
        let mut u = ComplexMatrix::identity(HILBERT_DIM, HILBERT_DIM);
        for j in 0..pulse.n_slices() {
            let step = self.slice_spectrum(pulse, j)?.expm(pulse.dt);
            u = step * u;
        }
        if u.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical("propagator has non-finite entries".into()));
        }
        Ok(u)
    }
}

/// Time-ordered propagator of `pulse` on the device `params`.
pub fn propagate(pulse: &PulseSet, params: &DeviceParams) -> Result<ComplexMatrix> {
    pulse.validate()?;
    System::new(params).propagate(pulse)
}

/// `Tr(V† U)` without forming the product.
pub fn trace_overlap(u: &ComplexMatrix, target: &ComplexMatrix) -> Complex64 {
    u.iter()
        .zip(target.iter())
        .fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + y.conj() * x)
}

/// Average gate fidelity `(|Tr(V†U)|² + D) / (D(D+1))`, `D` the full
/// Hilbert-space dimension.
pub fn avg_gate_fidelity(u: &ComplexMatrix, target: &ComplexMatrix) -> Result<f64> {
    if u.shape() != target.shape() || u.nrows() != u.ncols() {
        return Err(Error::DimensionMismatch {
            expected: target.nrows(),
            actual: u.nrows(),
        });
    }
    let d = u.nrows() as f64;
    let z = trace_overlap(u, target);
    Ok((z.norm_sqr() + d) / (d * (d + 1.0)))
}

/// Target gate selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    #[default]
    Cz3,
    Alt,
}

impl Gate {
    pub fn matrix(self) -> ComplexMatrix {
        match self {
            Gate::Cz3 => target_cz3(),
            Gate::Alt => target_alt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Gate::Cz3 => "cz3",
            Gate::Alt => "alt",
        }
    }
}

impl std::str::FromStr for Gate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cz3" => Ok(Gate::Cz3),
            "alt" => Ok(Gate::Alt),
            other => Err(Error::InvalidParameter(format!("unknown gate `{other}`"))),
        }
    }
}

fn diagonal(phases: &[Complex64]) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&DVector::from_column_slice(phases))
}

/// Two-qutrit controlled phase:
/// `diag(1,1,1, 1,ω,ω*, 1,ω*,ω)` with `ω = e^{2πi/3}`.
pub fn target_cz3() -> ComplexMatrix {
    let one = Complex64::new(1.0, 0.0);
    let w = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    let wc = w.conj();
    diagonal(&[one, one, one, one, w, wc, one, wc, w])
}

/// Phase flip on `|22>` only.
pub fn target_alt() -> ComplexMatrix {
    let one = Complex64::new(1.0, 0.0);
    let mut d = [one; HILBERT_DIM];
    d[HILBERT_DIM - 1] = -one;
    diagonal(&d)
}

/// `max |(U†U − I)_ij|`.
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    let n = u.nrows();
    let prod = u.adjoint() * u;
    let id = ComplexMatrix::identity(n, n);
    (prod - id).iter().fold(0.0, |m, z| m.max(z.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        (a - b).iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    #[test]
    fn ladder_entries() {
        let a = ladder_op(3).unwrap();
        assert_eq!(a[(0, 1)], c(1.0));
        assert!((a[(1, 2)].re - 2f64.sqrt()).abs() < 1e-15);
        let nonzero = a.iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn ladder_rejects_small_dim() {
        assert!(matches!(ladder_op(1), Err(Error::InvalidDimension(_))));
        assert!(ladder_op(0).is_err());
    }

    #[test]
    fn number_and_quartic_operators() {
        let (_, n, quartic) = qutrit_ops();
        for k in 0..3 {
            assert!((n[(k, k)] - c(k as f64)).norm() < 1e-14);
        }
        // a†²a² by explicit index multiplication
        let a = ladder_op(3).unwrap();
        let ad = a.adjoint();
        let mut oracle = ComplexMatrix::zeros(3, 3);
        for i in 0..3 {
            for l in 0..3 {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..3 {
                    for k in 0..3 {
                        for m in 0..3 {
                            acc += ad[(i, j)] * ad[(j, k)] * a[(k, m)] * a[(m, l)];
                        }
                    }
                }
                oracle[(i, l)] = acc;
            }
        }
        assert!(max_abs_diff(&quartic, &oracle) < 1e-14);
        assert!((quartic[(2, 2)] - c(2.0)).norm() < 1e-14);
        assert!(quartic[(1, 1)].norm() < 1e-14);
    }

    #[test]
    fn drift_uncoupled_diagonal() {
        let p = DeviceParams {
            omega1: 1.0,
            omega2: 2.0,
            chi1: 0.0,
            chi2: 0.0,
            g: 0.0,
        };
        let h = build_drift(&p);
        assert!((h[(5, 5)] - c(5.0)).norm() < 1e-14);
        for i in 0..9 {
            for j in 0..9 {
                if i != j {
                    assert_eq!(h[(i, j)].norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn drift_anharmonic_shift() {
        let p = DeviceParams {
            omega1: 1.0,
            omega2: 0.0,
            chi1: -0.05,
            chi2: 0.0,
            g: 0.0,
        };
        // |20> has index 6
        assert!((build_drift(&p)[(6, 6)] - c(1.9)).norm() < 1e-14);
    }

    #[test]
    fn drift_coupling_element() {
        let p = DeviceParams {
            omega1: 0.0,
            omega2: 0.0,
            chi1: 0.0,
            chi2: 0.0,
            g: 0.0025,
        };
        let h = build_drift(&p);
        // <00|H|11>: index 0 and index 4
        assert!((h[(0, 4)] - c(0.0025)).norm() < 1e-16);
        assert!(hermitian_defect(&h) < 1e-14);
        let h = build_drift(&DeviceParams::default());
        assert!(hermitian_defect(&h) < 1e-14);
    }

    #[test]
    fn control_elements_and_commutation() {
        let [c1, c2] = build_control_ops();
        // <00|Hc1|10> = indices 0, 3; <10|Hc1|20> = indices 3, 6
        assert!((c1[(0, 3)] - c(1.0)).norm() < 1e-15);
        assert!((c1[(3, 6)] - c(2f64.sqrt())).norm() < 1e-15);
        assert!(hermitian_defect(&c1) < 1e-15 && hermitian_defect(&c2) < 1e-15);
        let n1 = number_op(0);
        let comm = &c2 * &n1 - &n1 * &c2;
        assert!(comm.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let h = ComplexMatrix::zeros(9, 9);
        let u = herm_expm(&h, 3.7).unwrap();
        assert!(max_abs_diff(&u, &ComplexMatrix::identity(9, 9)) < 1e-15);
    }

    #[test]
    fn expm_number_operator_phases() {
        let n1 = number_op(0);
        let u = herm_expm(&n1, std::f64::consts::PI).unwrap();
        let expected = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0];
        for (k, e) in expected.iter().enumerate() {
            assert!((u[(k, k)] - c(*e)).norm() < 1e-14, "entry {k}: {}", u[(k, k)]);
        }
        assert!(unitarity_defect(&u) < 1e-14);
    }

    #[test]
    fn expm_rejects_non_hermitian() {
        let mut h = ComplexMatrix::zeros(3, 3);
        h[(0, 1)] = c(1.0);
        assert!(matches!(herm_expm(&h, 1.0), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn cz3_entries() {
        let u = target_cz3();
        assert!((u[(4, 4)] - Complex64::new(-0.5, 0.866_025_403_784_438_6)).norm() < 1e-15);
        assert!(unitarity_defect(&u) < 1e-15);
        let cube = &u * &u * &u;
        assert!(max_abs_diff(&cube, &ComplexMatrix::identity(9, 9)) < 1e-14);
        for i in 0..9 {
            for j in 0..9 {
                if i != j {
                    assert_eq!(u[(i, j)].norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn alt_entries() {
        let u = target_alt();
        assert_eq!(u[(8, 8)], c(-1.0));
        assert!(max_abs_diff(&(&u * &u), &ComplexMatrix::identity(9, 9)) < 1e-15);
        assert!((u.trace() - c(7.0)).norm() < 1e-15);
    }

    #[test]
    fn fidelity_identities() {
        let cz = target_cz3();
        let id = ComplexMatrix::identity(9, 9);
        assert!((avg_gate_fidelity(&cz, &cz).unwrap() - 1.0).abs() < 1e-15);
        assert!((avg_gate_fidelity(&id, &cz).unwrap() - 0.2).abs() < 1e-14);
        assert!((avg_gate_fidelity(&id, &target_alt()).unwrap() - 58.0 / 90.0).abs() < 1e-14);
        let small = ComplexMatrix::identity(3, 3);
        assert!(avg_gate_fidelity(&small, &cz).is_err());
    }

    #[test]
    fn propagate_zero_pulse_is_drift_evolution() {
        let p = DeviceParams::default();
        let pulse = PulseSet::zeros(7, 10.0, 0.3).unwrap();
        let u = propagate(&pulse, &p).unwrap();
        let expected = herm_expm(&build_drift(&p), 70.0).unwrap();
        assert!(max_abs_diff(&u, &expected) < 1e-11);
    }

    #[test]
    fn propagate_single_slice() {
        let p = DeviceParams::default();
        let pulse = PulseSet::new(10.0, 0.3, [vec![0.2], vec![-0.1]]).unwrap();
        let u = propagate(&pulse, &p).unwrap();
        let sys = System::new(&p);
        let expected = herm_expm(&sys.slice_hamiltonian(0.2, -0.1), 10.0).unwrap();
        assert!(max_abs_diff(&u, &expected) < 1e-14);
    }

    #[test]
    fn propagate_orders_last_slice_leftmost() {
        let p = DeviceParams::default();
        let pulse = PulseSet::new(10.0, 0.3, [vec![0.25, -0.1], vec![0.05, 0.2]]).unwrap();
        let sys = System::new(&p);
        let u0 = herm_expm(&sys.slice_hamiltonian(0.25, 0.05), 10.0).unwrap();
        let u1 = herm_expm(&sys.slice_hamiltonian(-0.1, 0.2), 10.0).unwrap();
        let u = propagate(&pulse, &p).unwrap();
        assert!(max_abs_diff(&u, &(&u1 * &u0)) < 1e-13);
        assert!(max_abs_diff(&u, &(&u0 * &u1)) > 1e-6);
    }

    #[test]
    fn pulse_validation() {
        assert!(PulseSet::new(10.0, 0.3, [vec![0.31], vec![0.0]]).is_err());
        assert!(PulseSet::new(10.0, 0.3, [vec![0.1, 0.2], vec![0.0]]).is_err());
        assert!(PulseSet::new(0.0, 0.3, [vec![0.1], vec![0.0]]).is_err());
        assert!(PulseSet::new(1.0, 0.3, [vec![], vec![]]).is_err());
        let p = PulseSet::new(1.0, 0.3, [vec![0.1, 0.2], vec![-0.3, 0.0]]).unwrap();
        assert_eq!(PulseSet::from_flat(&p.to_flat(), 1.0, 0.3).unwrap(), p);
        assert_eq!(p.total_time(), 2.0);
    }

    #[test]
    fn device_params_validation() {
        assert!(DeviceParams::default().validate().is_ok());
        let mut p = DeviceParams::default();
        p.g = 0.0;
        assert!(p.validate().is_err());
        p.g = f64::NAN;
        assert!(p.validate().is_err());
    }
}
