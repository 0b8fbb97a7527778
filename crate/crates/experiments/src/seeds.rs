//! Counter-based seed splitting: one global 64-bit seed expands into
//! independent per-replication substreams, so replications reproduce
//! individually and may run in parallel.

/// SplitMix64 step; the standard finalizer has full avalanche, which keeps
/// substreams decorrelated even for adjacent counters.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of substream `index` under the global seed.
pub fn substream(global: u64, index: u64) -> u64 {
    splitmix64(global ^ splitmix64(index))
}

/// Seed of a named component inside a substream (dataset draw vs optimizer
/// draw vs Monte Carlo draw), so the components stay independent.
pub fn component(global: u64, index: u64, component: u64) -> u64 {
    splitmix64(substream(global, index).wrapping_add(splitmix64(component)))
}
