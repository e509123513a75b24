use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Identifies one reproducible random stream: a ChaCha8 generator keyed by
/// `base_seed` running on stream `stream_id`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub base_seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(base_seed: u64, stream_id: u64) -> Self {
        Self {
            base_seed,
            stream_id,
        }
    }

    /// Child stream for `(purpose, index)`; independent of call order.
    pub fn derive(&self, purpose: &str, index: u64) -> Self {
        Self {
            base_seed: self.base_seed,
            stream_id: stream_hash(&[self.stream_id, fnv1a(purpose.as_bytes()), index]),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Order-sensitive mix of a tuple of words into one stream id.
pub fn stream_hash(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x243f_6a88_85a3_08d3, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_spec_same_sequence() {
        let s = RngSpec::new(42, 7);
        let a: Vec<u64> = (0..8).map(|_| 0).scan(s.rng(), |r, _: u64| Some(r.random())).collect();
        let b: Vec<u64> = (0..8).map(|_| 0).scan(s.rng(), |r, _: u64| Some(r.random())).collect();
        assert_eq!(a, b);
        let c: u64 = RngSpec::new(42, 8).rng().random();
        assert_ne!(a[0], c);
    }

    #[test]
    fn derived_streams_differ_by_purpose_and_index() {
        let s = RngSpec::new(1, 0);
        assert_ne!(s.derive("ensemble", 0), s.derive("noise", 0));
        assert_ne!(s.derive("ensemble", 0), s.derive("ensemble", 1));
        assert_eq!(s.derive("ensemble", 3), s.derive("ensemble", 3));
    }
}
