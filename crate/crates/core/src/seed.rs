//! Deterministic seed derivation for independent random streams.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a global seed and a path of indices, e.g.
/// `derive(global, &[level, realization])`. Stable across platforms and
/// releases.
pub fn derive(global: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(global), |acc, &p| mix(acc ^ mix(p.wrapping_add(0x632B_E59B_D9B4_E019))))
}

/// Stream tags keep excitation and noise draws independent for the same
/// `(level, realization)` pair.
pub mod tag {
    pub const PHASES: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const BOOTSTRAP: u64 = 3;
}
