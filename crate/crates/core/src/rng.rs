//! Seed derivation and per-agent random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic 64-bit hash of a `(seed, index)` pair.
pub fn hash64(seed: u64, index: u64) -> u64 {
    mix(mix(seed.wrapping_add(0x9e37_79b9_7f4a_7c15)) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// Stream labels so graph, class and sample randomness never overlap.
pub(crate) const GRAPH_STREAM: u64 = 0x0067_7261_7068;
pub(crate) const CLASS_STREAM: u64 = 0x0063_6c61_7373;

/// Generator for agent `agent` under replication seed `seed`.
///
/// Each agent owns an independent ChaCha stream, so trajectories do not
/// depend on the order in which agents are visited.
pub fn agent_rng(seed: u64, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(agent as u64 + 1);
    rng
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
