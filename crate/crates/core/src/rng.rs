// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! Seeded random streams.
//!
//! Every consumer draws from its own ChaCha8 stream derived from one master
//! seed, so adding draws in one place never shifts another. Gaussian variates
//! come from `rand_distr::StandardNormal`, which is platform independent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream identifiers; the discriminant is the ChaCha stream number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Device = 1,
    PulseInit = 2,
    AgentInit = 3,
    Exploration = 4,
    Estimation = 5,
    Evaluation = 6,
    Replay = 7,
}

impl Stream {
    pub const ALL: [Stream; 7] = [
        Stream::Device,
        Stream::PulseInit,
        Stream::AgentInit,
        Stream::Exploration,
        Stream::Estimation,
        Stream::Evaluation,
        Stream::Replay,
    ];
}

pub fn stream_rng(master_seed: u64, stream: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream as u64);
    rng
}
