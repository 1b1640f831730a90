//! Stable, platform-independent hashing for deriving seeds and mock outputs.

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a seed with a stream index into an independent seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream))
}

/// Hash a sequence of string fields, separating them unambiguously.
pub fn hash_fields(seed: u64, fields: &[&str]) -> u64 {
    let mut h = mix64(seed);
    for f in fields {
        h = mix64(h ^ fnv1a(f.as_bytes()) ^ (f.len() as u64).rotate_left(17));
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_known_vectors() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn field_boundaries_matter() {
        assert_ne!(hash_fields(1, &["ab", "c"]), hash_fields(1, &["a", "bc"]));
        assert_ne!(hash_fields(1, &["a"]), hash_fields(2, &["a"]));
    }
}
