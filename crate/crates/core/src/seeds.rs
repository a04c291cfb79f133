//! Seed plumbing.
//!
//! Every random stream in the crate is derived from a base seed, a purpose tag
//! and a list of indices, so no two consumers ever share a stream and a run is
//! reproducible no matter how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags. Each consumer of randomness owns exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Split,
    Init,
    RecallNoise,
    SmoothShape,
    SmoothTable,
    Synthetic,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Split => 0x5350_4c49_5400_0001,
            Purpose::Init => 0x494e_4954_0000_0002,
            Purpose::RecallNoise => 0x4e4f_4953_4500_0003,
            Purpose::SmoothShape => 0x534d_4f4f_5448_0004,
            Purpose::SmoothTable => 0x5441_424c_4500_0005,
            Purpose::Synthetic => 0x5359_4e54_4800_0006,
        }
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix `base`, `purpose` and `indices` into a single 64-bit seed.
pub fn derive(base: u64, purpose: Purpose, indices: &[u64]) -> u64 {
    let mut h = splitmix64(base ^ purpose.tag());
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

pub fn rng(base: u64, purpose: Purpose, indices: &[u64]) -> Rng {
    Rng::seed_from_u64(derive(base, purpose, indices))
}
