//! Stable seed derivation so that per-task / per-trial randomness does not
//! depend on iteration order or on `std` hasher randomization.

/// FNV-1a over the bytes of a string. Stable across runs and platforms.
pub fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derives a child seed from a base seed and a label (splitmix-style mix).
pub fn derive(base: u64, label: &str) -> u64 {
    mix(base ^ fnv1a64(label))
}

/// Derives a child seed from a base seed and an index.
pub fn derive_indexed(base: u64, label: &str, index: u64) -> u64 {
    mix(derive(base, label).wrapping_add(index.wrapping_mul(0x9e3779b97f4a7c15)))
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
