// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! Two-qutrit CZ₃ gate design by GRAPE and residual calibration of the
//! optimized pulse with contextual-bandit reinforcement learning.

// NaN must fail every validity check, hence `!(x > 0.0)` style comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod checkpoint;
pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod env;
pub mod error;
pub mod eval;
pub mod export;
pub mod grape;
pub mod lbfgs;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
