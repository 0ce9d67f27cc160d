// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! Static device disorder: Gaussian offsets on `ω1`, `ω2` and `g`.
//!
//! Anharmonicities are never perturbed. Draws are not truncated; the ±3σ
//! lines only appear as histogram markers.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::DeviceParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub sigma_omega: f64,
    pub sigma_g: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_omega: 1e-3,
            sigma_g: 5e-5,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma_omega", self.sigma_omega), ("sigma_g", self.sigma_g)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeviceOffsets {
    pub d_omega1: f64,
    pub d_omega2: f64,
    pub d_g: f64,
}

impl DeviceOffsets {
    pub const ZERO: DeviceOffsets = DeviceOffsets {
        d_omega1: 0.0,
        d_omega2: 0.0,
        d_g: 0.0,
    };

    pub fn as_array(&self) -> [f64; 3] {
        [self.d_omega1, self.d_omega2, self.d_g]
    }
}

/// One device: `δω1, δω2 ~ N(0, σ_ω²)`, `δg ~ N(0, σ_g²)`, drawn in that order.
pub fn sample_offsets<R: Rng + ?Sized>(rng: &mut R, config: &NoiseConfig) -> DeviceOffsets {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let z3: f64 = rng.sample(StandardNormal);
    DeviceOffsets {
        d_omega1: config.sigma_omega * z1,
        d_omega2: config.sigma_omega * z2,
        d_g: config.sigma_g * z3,
    }
}

pub fn apply_offsets(nominal: &DeviceParams, offsets: &DeviceOffsets) -> DeviceParams {
    DeviceParams {
        omega1: nominal.omega1 + offsets.d_omega1,
        omega2: nominal.omega2 + offsets.d_omega2,
        g: nominal.g + offsets.d_g,
        ..*nominal
    }
}

/// The representative static-noise device shared by every method.
pub fn fixed_single_device() -> DeviceOffsets {
    DeviceOffsets {
        d_omega1: -3.0744e-4,
        d_omega2: -8.3866e-4,
        d_g: 6.2819e-6,
    }
}

pub const PARAMETER_NAMES: [&str; 3] = ["d_omega1", "d_omega2", "d_g"];

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub parameter: &'static str,
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub mean: f64,
    /// `mean − 3σ` and `mean + 3σ` with the configured width.
    pub sigma_markers: (f64, f64),
}

/// Per-parameter histograms over a range symmetric about zero that covers
/// every sample and at least ±4σ.
pub fn offset_histogram(
    samples: &[DeviceOffsets],
    bins: usize,
    config: &NoiseConfig,
) -> Result<Vec<Histogram>> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("histogram needs at least one sample".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
    }
    let sigmas = [config.sigma_omega, config.sigma_omega, config.sigma_g];
    let mut out = Vec::with_capacity(3);
    for (p, (&name, &sigma)) in PARAMETER_NAMES.iter().zip(&sigmas).enumerate() {
        let values: Vec<f64> = samples.iter().map(|s| s.as_array()[p]).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let extent = values.iter().fold(4.0 * sigma, |m, v| m.max(v.abs()));
        let half = if extent > 0.0 { extent } else { 1.0 };
        let width = 2.0 * half / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|k| -half + k as f64 * width).collect();
        let mut counts = vec![0u64; bins];
        for v in &values {
            let idx = (((v + half) / width).floor() as isize).clamp(0, bins as isize - 1);
            counts[idx as usize] += 1;
        }
        out.push(Histogram {
            parameter: name,
            edges,
            counts,
            mean,
            sigma_markers: (mean - 3.0 * sigma, mean + 3.0 * sigma),
        });
    }
    Ok(out)
}
