//! Deterministic RNG derivation.
//!
//! Every parallel task (fold, grid point, permutation replica, ensemble
//! member) owns an independent stream derived from the experiment seed and a
//! stable task path, so results do not depend on scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a base seed with a task path into a new seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut state = base ^ 0x6a09_e667_f3bc_c908;
    let mut out = splitmix64(&mut state);
    for &part in path {
        state ^= part.wrapping_mul(0x2545_f491_4f6c_dd1d);
        out ^= splitmix64(&mut state);
    }
    out
}

/// Seeded generator for the task identified by `path` under `base`.
pub fn rng_for(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}

/// Seeded uniform subsample without replacement, in stable (input) order.
pub fn seeded_subsample<T: Clone>(items: &[T], take: usize, seed: u64, path: &[u64]) -> Vec<T> {
    use rand::seq::SliceRandom;
    let mut indices: Vec<usize> = (0..items.len()).collect();
    indices.shuffle(&mut rng_for(seed, path));
    indices.truncate(take.min(items.len()));
    indices.sort_unstable();
    indices.into_iter().map(|i| items[i].clone()).collect()
}

/// FNV-1a hash of a string; stable across platforms and releases, unlike the
/// standard library's default hasher.
pub fn stable_hash(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
