//! Reproducible random streams.
//!
//! Every Monte Carlo loop in this crate derives one independent stream per
//! work item by hashing `(seed, index)`, so results are bit-identical no
//! matter how the items are scheduled across threads. ChaCha is counter-based
//! under the hood; the splitmix finalizer only spreads the key material.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer, the standard way to turn correlated integers into
/// decorrelated key words.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the stream for work item `index` under master seed `seed`.
pub fn derive_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ 0x6a09_e667_f3bc_c908u64.wrapping_mul(index.wrapping_add(1));
    let mut key = [0u8; 32];
    // fold the raw (seed, index) pair back in so distinct pairs cannot collide
    // after the first mix
    let words = [
        splitmix64(&mut state),
        splitmix64(&mut state) ^ seed,
        splitmix64(&mut state) ^ index,
        splitmix64(&mut state),
    ];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
