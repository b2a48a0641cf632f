//! Seeded, splittable random streams.
//!
//! Every consumer of randomness receives its own ChaCha8 stream. A stream is
//! addressed by a 64-bit seed and a 64-bit stream id; ChaCha guarantees the
//! streams are independent, so Monte Carlo run `i` can be simulated on any
//! thread without changing its draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream `index` of the generator keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derive a child seed from a parent seed and a label. SplitMix64 finaliser.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    let mut z = parent ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for Monte Carlo run `run` under `master`.
pub fn run_seed(master: u64, run: usize) -> u64 {
    derive_seed(master, run as u64 + 1)
}

/// Labels used to split a run seed into purpose-specific streams.
pub mod label {
    pub const MODEL: u64 = 0x4d4f_4445_4c00;
    pub const ENV: u64 = 0x454e_5600;
    pub const AGENT: u64 = 0x4147_454e_5400;
    pub const DETECTOR: u64 = 0x4445_5400;
    pub const EVAL: u64 = 0x4556_414c_00;
}
