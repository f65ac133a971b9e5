//! Deterministic derivation of per-task RNG seeds.
//!
//! Every randomized stage (fold shuffling, structure sampling, repeated runs)
//! draws its seed from the user-visible master seed plus the integers that
//! identify the stage, so results are reproducible regardless of execution
//! order or thread count.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes an ordered tuple of integers into a single seed. Changing any
/// element, or the arity, changes the output.
pub(crate) fn mix(parts: &[u64]) -> u64 {
    let mut h = splitmix64(parts.len() as u64);
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}
