//! Counter-based random substreams.
//!
//! Every stochastic quantity is drawn from a ChaCha8 stream selected by a
//! `(key, stream id)` pair. Keys are derived from the master seed and a
//! domain tag, stream ids are work-item indices (repetition number, row
//! number, ...). Results therefore do not depend on which thread evaluates
//! which work item.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain tags separating independent uses of one master seed.
pub mod domain {
    pub const BATH_RATES: u64 = 0x0b47_4a7e;
    pub const REALIZATIONS: u64 = 0x9ea1_12a7;
    pub const PSD_TRACES: u64 = 0x05d7_ace5;
    pub const READOUT: u64 = 0x7ead_0001;
    pub const AMPLITUDES: u64 = 0xa3b1_17d5;
    pub const SYNTHETIC: u64 = 0x5e7_7e71c;
    pub const STRONG_RTN: u64 = 0x57a0_6e01;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedTree {
    key: u64,
}

impl SeedTree {
    pub fn new(master_seed: u64) -> Self {
        Self {
            key: splitmix64(master_seed),
        }
    }

    /// Child tree for an independent purpose.
    pub fn domain(&self, tag: u64) -> Self {
        Self {
            key: splitmix64(self.key ^ splitmix64(tag.wrapping_add(0x632b_e59b_d9b4_e019))),
        }
    }

    /// Stream number `index` of this tree.
    pub fn stream(&self, index: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key);
        rng.set_stream(index);
        rng
    }
}

/// SplitMix64 finaliser, used only for key derivation.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
