//! Deterministic seed derivation.
//!
//! One master seed spawns independent named streams (rate control, RLNC
//! draws, one channel stream per receiver) so that runs differing only in the
//! coding or rate-control scheme share their channel randomness: common
//! random numbers make scheme comparisons pointwise meaningful.
//!
//! Sweeps derive one child seed per (grid point, repetition) with the
//! splitmix64 chain below; it is documented here so alternate implementations
//! can reproduce the exact streams:
//!
//! ```text
//! child  = splitmix64(splitmix64(master ^ GRID_SALT * (grid + 1)) ^ REP_SALT * (rep + 1))
//! stream = ChaCha12 seeded with splitmix64(child ^ STREAM_SALT * (tag + 1))
//! ```
//!
//! with tag 0 for rate control, 1 for RLNC draws, and 2 + r for receiver r's
//! channel.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

const GRID_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const REP_SALT: u64 = 0xd1b5_4a32_d192_ed03;
const STREAM_SALT: u64 = 0xa076_1d64_78bd_642f;

/// Identifies one of a run's independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    RateControl,
    RlncDraws,
    Channel(usize),
}

impl StreamId {
    fn tag(self) -> u64 {
        match self {
            StreamId::RateControl => 0,
            StreamId::RlncDraws => 1,
            StreamId::Channel(r) => 2 + r as u64,
        }
    }
}

/// Standard splitmix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for one grid point / repetition of a sweep.
pub fn child_seed(master: u64, grid_index: u64, rep: u64) -> u64 {
    let g = splitmix64(master ^ GRID_SALT.wrapping_mul(grid_index + 1));
    splitmix64(g ^ REP_SALT.wrapping_mul(rep + 1))
}

pub fn stream_seed(run_seed: u64, stream: StreamId) -> u64 {
    splitmix64(run_seed ^ STREAM_SALT.wrapping_mul(stream.tag() + 1))
}

pub fn stream_rng(run_seed: u64, stream: StreamId) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(stream_seed(run_seed, stream))
}
