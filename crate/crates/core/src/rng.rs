//! Seed derivation and small sampling helpers.
//!
//! Every stochastic operation receives its own ChaCha8 stream keyed by
//! `(global_seed, episode, purpose)`, so results never depend on the order in
//! which episodes are evaluated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags for derived streams.
pub mod purpose {
    pub const SCENE: u64 = 1;
    pub const POLICY: u64 = 2;
    pub const EXPLORE: u64 = 3;
    pub const PLANNER: u64 = 4;
    pub const LIPSCHITZ: u64 = 5;
    pub const HOLDOUT: u64 = 6;
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(global_seed: u64, episode: u64, purpose: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(global_seed) ^ episode) ^ purpose.rotate_left(32))
}

pub fn rng_for(global_seed: u64, episode: u64, purpose: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(global_seed, episode, purpose))
}

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Standard normal sample via Box-Muller.
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}
