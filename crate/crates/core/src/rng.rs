//! Keyed random streams.
//!
//! Every consumer of randomness receives its own ChaCha8 stream derived from
//! `(master seed, purpose tag, index)`. Streams never depend on scheduling, so
//! results are identical regardless of how many threads run the work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// A node in the seed derivation tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(u64);

impl Seed {
    pub const fn new(master: u64) -> Self {
        Seed(master)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Derives the child seed for `(tag, index)`.
    pub fn child(self, tag: &str, index: u64) -> Seed {
        let h = splitmix64(self.0 ^ splitmix64(fnv1a(tag)));
        Seed(splitmix64(h ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019))))
    }

    /// Opens the stream `index` under `tag`.
    pub fn stream(self, tag: &str, index: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.0 ^ fnv1a(tag)));
        rng.set_stream(index);
        rng
    }
}

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
