//! Named deterministic random streams.
//!
//! Each consumer gets its own ChaCha stream derived from the master seed, so
//! that e.g. a different routing policy consumes policy randomness without
//! shifting mobility or traffic draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Mobility,
    Traffic,
    ChannelAssignment,
    NeighborSelection,
    PolicySampling,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Mobility => 1,
            Stream::Traffic => 2,
            Stream::ChannelAssignment => 3,
            Stream::NeighborSelection => 4,
            Stream::PolicySampling => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    master_seed: u64,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream(&self, which: Stream) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(which.id());
        rng
    }
}

/// Mix a base seed with an index (episode, run) into an independent seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined word
    let mut z = base
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
