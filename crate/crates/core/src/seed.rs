//! Seed derivation helpers.

/// SplitMix64 finalizer. Bijective on `u64`, so distinct inputs never collide.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a stream tag.
pub fn derive(seed: u64, tag: u64) -> u64 {
    mix64(mix64(seed) ^ tag.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// Seed for scoring the unordered cluster pair `{a, b}`.
pub fn pair_seed(a: usize, b: usize, global: u64) -> u64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    derive(derive(global, lo as u64), hi as u64)
}
