//! Deterministic sub-seed derivation.
//!
//! Every stochastic stage owns one user-facing seed. Where a stage needs
//! several independent streams (one per trial, per cluster count, per split
//! repetition) the stream seed is derived here so that results do not depend
//! on evaluation order.

/// Derives a child seed from a base seed and a stream tag (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Two-level derivation, e.g. `(seed, class, trial)`.
pub fn derive_seed2(base: u64, a: u64, b: u64) -> u64 {
    derive_seed(derive_seed(base, a), b)
}
