//! Deterministic per-purpose random streams.
//!
//! Every consumer of randomness (each external agent, auxiliary-object
//! placement, world layout, the controller's exploration draws, validation
//! forks) gets its own ChaCha stream keyed by the run seed plus a tag path,
//! e.g. `(seed, AGENT, quadrant, agent_index)`. Streams never interleave, so
//! adding a draw in one behavior cannot perturb any other agent's
//! trajectory, and a validation fork can be built mid-run without touching
//! training randomness.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tag path segments. The numeric values are part of the on-disk
/// reproducibility contract (a logged seed must replay forever), so they are
/// fixed constants rather than enum discriminants.
pub mod tag {
    pub const LAYOUT: u64 = 1;
    pub const AGENT: u64 = 2;
    pub const AUX: u64 = 3;
    pub const POLICY: u64 = 4;
    pub const MODEL_INIT: u64 = 5;
    pub const REPLAY_SAMPLE: u64 = 6;
    pub const VALIDATION: u64 = 7;
    pub const CURIOSITY: u64 = 8;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// ChaCha8 stream for `(seed, tags...)`. Distinct tag paths give
/// independent streams; the same path always gives the same stream.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut s = splitmix(seed);
    for &t in tags {
        s = splitmix(s ^ t.wrapping_mul(0x9e3779b97f4a7c15));
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Standard-normal draw via Box-Muller.
pub fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
