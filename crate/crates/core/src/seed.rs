//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a tuple of integers, so streams never share state and can be
//! replayed from the tuple alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep streams for different purposes apart even when the
/// remaining tuple entries coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Data = 1,
    Init = 2,
    Batch = 3,
    Permutation = 4,
    Noise = 5,
    SharedNoise = 6,
    Probe = 7,
    Trial = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one 64-bit seed.
pub fn mix(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64, domain: Domain, parts: &[u64]) -> ChaCha8Rng {
    let mut all = Vec::with_capacity(parts.len() + 1);
    all.push(domain as u64);
    all.extend_from_slice(parts);
    ChaCha8Rng::seed_from_u64(mix(seed, &all))
}

/// Seed of trial `trial` within a run keyed by `master_seed`.
pub fn trial_seed(master_seed: u64, trial: usize) -> u64 {
    mix(master_seed, &[Domain::Trial as u64, trial as u64])
}
