use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the label; stable across builds, unlike `DefaultHasher`.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive an independent counter-based RNG stream from a single user seed.
///
/// Every random draw in the crate flows through this: same (seed, label)
/// always yields the same stream, and distinct labels never collide with
/// each other regardless of how many values either stream consumes.
pub(crate) fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label_hash(label));
    rng
}
