// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! Shared fixtures for the benchmarks.

use quditcal::dynamics::{DeviceParams, PulseSet};
use quditcal::grape::{init_pulse, GrapeConfig};

/// The default-size random pulse (N = 160).
pub fn default_pulse() -> PulseSet {
    init_pulse(&GrapeConfig::default()).expect("default config is valid")
}

pub fn default_params() -> DeviceParams {
    DeviceParams::default()
}
