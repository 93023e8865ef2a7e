//! Seeded random streams.
//!
//! All randomness comes from ChaCha8 seeded with a 64-bit scenario seed. Each
//! purpose (user placement, channel noise, whitening matrices, synthetic
//! source) reads its own ChaCha stream, so adding draws for one purpose never
//! shifts the numbers seen by another.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Users = 1,
    Noise = 2,
    Whitening = 3,
    Source = 4,
}

/// Generator for `purpose` under `seed`.
pub fn stream(seed: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// Child seed number `index` of a purpose stream, e.g. one per Monte-Carlo
/// trial or per user.
pub fn child_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | (index + 1));
    rng.next_u64()
}
