//! Deterministic RNG stream derivation.
//!
//! Every parallel unit of work (a descent run, a Langevin chain, a label
//! pair, a generator draw) owns its own counter-derived stream, so serial
//! and parallel execution produce identical results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags, one per subsystem, so identical (seed, index) pairs in
/// different stages never collide.
pub mod tag {
    pub const MODEFIND: u64 = 0x4d4f_4445;
    pub const LANGEVIN: u64 = 0x4c47_564e;
    pub const LABELS: u64 = 0x4c41_424c;
    pub const TRAIN: u64 = 0x5452_4149;
    pub const SPLIT: u64 = 0x53_504c54;
    pub const BRIDGE: u64 = 0x4252_4447;
    pub const SAMPLE: u64 = 0x534d_504c;
    pub const METROPOLIS: u64 = 0x4d48_5257;
    pub const GROUND_TRUTH: u64 = 0x4754_5254;
    pub const SCORE_POINTS: u64 = 0x5343_5054;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a sub-seed from a global seed and a path of (tag, index, ...)
/// words; used to give each pipeline component its own seed space.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut state = seed ^ 0x9216_d5d9_8979_fb1b;
    let _ = splitmix64(&mut state);
    for &word in path {
        state ^= word.wrapping_mul(0x2545_f491_4f6c_dd1d);
        let _ = splitmix64(&mut state);
    }
    splitmix64(&mut state)
}

/// Derive an independent ChaCha stream from a global seed and a path of
/// (tag, component, index, ...) words.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = seed ^ 0x6a09_e667_f3bc_c908;
    let _ = splitmix64(&mut state);
    for &word in path {
        state ^= word.wrapping_mul(0x2545_f491_4f6c_dd1d);
        let _ = splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
