//! Named random streams: every random decision in the pipeline draws from a
//! stream derived from (master seed, stream name), so subsystems stay
//! decoupled and runs are reproducible end to end.
//!
//! Stream names in use:
//!   "scene/{id}"        scene geometry, motion and colors
//!   "rig/{id}"          camera placement for one scene
//!   "init/{model}"      weight initialization
//!   "train/{model}"     batch sampling and loss-time randomness
//!   "jitter/{model}"    stratified ray jitter base seed

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the stream name, mixed with the master seed.
pub fn stream_seed(master: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ master.rotate_left(17);
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ master
}

pub fn stream(master: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, name))
}
