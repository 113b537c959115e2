//! Deterministic seed derivation.
//!
//! Every random draw in an experiment comes from a ChaCha8 stream seeded by
//! [`derive_seed`]`(master, stream, a, b)`, where `stream` names the consumer
//! and `a`, `b` index it (typically round and postponement attempt). The mix is
//! three chained SplitMix64 finalizers, so neighbouring indices give
//! unrelated streams and any single round can be replayed in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Topology = 1,
    Channel = 2,
    RandomPolicy = 3,
    Dataset = 4,
    Partition = 5,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, a: u64, b: u64) -> u64 {
    let s = splitmix64(master ^ splitmix64(stream as u64));
    let s = splitmix64(s ^ a);
    splitmix64(s ^ b.rotate_left(32))
}

pub fn stream_rng(master: u64, stream: Stream, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_stable_and_distinct() {
        let s = derive_seed(7, Stream::Channel, 3, 0);
        assert_eq!(s, derive_seed(7, Stream::Channel, 3, 0));
        assert_ne!(s, derive_seed(7, Stream::Channel, 4, 0));
        assert_ne!(s, derive_seed(7, Stream::Channel, 3, 1));
        assert_ne!(s, derive_seed(7, Stream::Topology, 3, 0));
        assert_ne!(s, derive_seed(8, Stream::Channel, 3, 0));
    }
}
