//! Seed-derived random streams.
//!
//! Every random draw in this crate comes from a stream addressed by
//! `(seed, tag, indices...)` rather than from one sequential generator.
//! Two consumers that touch disjoint addresses get statistically
//! independent streams, so results never depend on evaluation order or
//! on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Each random-consuming site owns one tag so that address
/// spaces never collide.
pub mod tag {
    pub const SCENE: u64 = 0x01;
    pub const STEP: u64 = 0x02;
    pub const OBSERVATION: u64 = 0x03;
    pub const DESCRIPTOR: u64 = 0x04;
    pub const RANSAC_ITER: u64 = 0x05;
    pub const TRIAL_SIM: u64 = 0x06;
    pub const TRIAL_CV: u64 = 0x07;
    pub const TRIAL_RANSAC: u64 = 0x08;
    pub const KEYPOINTS: u64 = 0x09;
    pub const WINDOW: u64 = 0x0a;
    pub const ABS_ANGLE: u64 = 0x0b;
}

/// SplitMix64 finalizer. Full-avalanche mix of one word.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collapse `(seed, parts...)` into a single stream seed.
///
/// Each part is avalanched before being folded in, so `mix(s, &[1, 2])`
/// and `mix(s, &[2, 1])` land far apart.
pub fn mix(seed: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix64(seed);
    for &p in parts {
        state = splitmix64(state ^ splitmix64(p));
    }
    state
}

/// A fresh ChaCha8 stream for the given address.
pub fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn mix_is_deterministic() {
        assert_eq!(mix(7, &[1, 2, 3]), mix(7, &[1, 2, 3]));
    }

    #[test]
    fn part_order_matters() {
        assert_ne!(mix(7, &[1, 2]), mix(7, &[2, 1]));
    }

    #[test]
    fn streams_are_independent_of_creation_order() {
        let a1: f64 = stream(42, &[tag::STEP, 0]).random();
        let b1: f64 = stream(42, &[tag::STEP, 1]).random();
        // Recreate in the opposite order.
        let b2: f64 = stream(42, &[tag::STEP, 1]).random();
        let a2: f64 = stream(42, &[tag::STEP, 0]).random();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_ne!(a1, b1);
    }
}
