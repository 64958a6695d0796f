//! Small deterministic hashing helpers shared by the stochastic models.

/// The splitmix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Uniform draw in `[0, 1)` keyed by `(seed, key)`. Independent of call order.
pub fn keyed_unit(seed: u64, key: u64) -> f64 {
    let h = splitmix64(seed ^ splitmix64(key.wrapping_mul(0xd6e8_feb8_6659_fd93)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// 64-bit FNV-1a, used for configuration and trace digests.
#[derive(Clone, Copy, Debug)]
pub struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv64 {
    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyed_unit_is_in_range_and_stable() {
        for k in 0..1000 {
            let u = keyed_unit(7, k);
            assert!((0.0..1.0).contains(&u));
            assert_eq!(u, keyed_unit(7, k));
        }
        assert_ne!(keyed_unit(7, 1), keyed_unit(8, 1));
    }
}
