//! Deterministic seed derivation for nested, order-independent tasks.
//!
//! Every replicate, partition, and draw gets its own generator keyed by
//! (root seed, task indices). Results then depend only on inputs and seed,
//! never on thread count or completion order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; the standard finalizer used to decorrelate seed streams.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a root seed and a path of task indices.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut state = seed;
    let mut out = splitmix64(&mut state);
    for &part in path {
        state ^= part.wrapping_mul(0xff51_afd7_ed55_8ccd);
        out ^= splitmix64(&mut state);
    }
    out
}

/// A counter-based generator for the given task path.
pub fn task_rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}
