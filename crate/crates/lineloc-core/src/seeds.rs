//! Deterministic derivation of independent RNG streams from a single run seed.
//!
//! Every stochastic component (odometry corruption, per-camera detection
//! noise, filter initialization, per-particle motion noise, resampling)
//! draws from its own stream keyed by the run seed plus a stream tag, so
//! that adding draws to one component never perturbs another and parallel
//! execution can reproduce the serial result exactly.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_ODOMETRY: u64 = 0x6f646f6d;
pub const STREAM_DETECTION: u64 = 0x64657463;
pub const STREAM_FILTER_INIT: u64 = 0x696e6974;
pub const STREAM_PREDICT: u64 = 0x70726564;
pub const STREAM_RESAMPLE: u64 = 0x72657370;

/// SplitMix64 finalizer; a cheap, well-mixed u64 -> u64 permutation.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Mixes an ordered list of words into a single stream seed.
pub fn mix(parts: &[u64]) -> u64 {
    let mut acc = 0x243f6a8885a308d3u64; // arbitrary non-zero start
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}

/// A fresh deterministic generator for the stream identified by `parts`.
pub fn stream_rng(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(parts))
}
