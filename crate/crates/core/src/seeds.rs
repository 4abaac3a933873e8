//! Seed substreams.
//!
//! Every random quantity is drawn from a ChaCha8 stream addressed by
//! `(seed, stream id)`, so trials can run in any order or in parallel and
//! still see exactly the same draws.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent per-trial randomness axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Data = 0,
    Replacements = 1,
    Schedule = 2,
}

const AXES: u64 = 4;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for one `(trial, axis)` cell, derived from the master seed.
pub fn derive_seed(master: u64, trial: u64, axis: Axis) -> u64 {
    stream_rng(master, trial * AXES + axis as u64).next_u64()
}
