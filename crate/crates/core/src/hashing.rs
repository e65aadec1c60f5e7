//! Stable byte-string hashes (FNV-1a).
//!
//! Used for state-key fingerprints in the visitation-count table and for
//! golden-value tests. Unlike `std`'s hasher these are fixed across releases
//! and platforms.

pub const FNV64_OFFSET: u64 = 0xCBF2_9CE4_8422_2325;
pub const FNV64_PRIME: u64 = 0x0000_0100_0000_01B3;

const FNV128_OFFSET: u128 = 0x6C62_272E_07BB_0142_62B8_2175_6295_C58D;
const FNV128_PRIME: u128 = 0x0000_0000_0100_0000_0000_0000_0000_013B;

/// 64-bit FNV-1a.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h = FNV64_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV64_PRIME);
    }
    h
}

/// 128-bit FNV-1a; collision-safe fingerprint for count-table keys.
pub fn fnv128(bytes: &[u8]) -> u128 {
    let mut h = FNV128_OFFSET;
    for &b in bytes {
        h ^= b as u128;
        h = h.wrapping_mul(FNV128_PRIME);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vectors() {
        // Reference values for the empty string and "a" per the FNV spec.
        assert_eq!(fnv64(b""), 0xCBF2_9CE4_8422_2325);
        assert_eq!(fnv64(b"a"), 0xAF63_DC4C_8601_EC8C);
        assert_eq!(fnv128(b""), FNV128_OFFSET);
    }

    #[test]
    fn distinguishes_nearby_keys() {
        assert_ne!(fnv128(b"state-1"), fnv128(b"state-2"));
        assert_ne!(fnv64(&[0, 1]), fnv64(&[1, 0]));
    }
}
