//! Deterministic random streams.
//!
//! Every random draw in a sweep comes from a stream keyed by
//! `(master seed, trial, purpose)`, so results do not depend on the order in
//! which a worker pool schedules trials.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Channel,
    /// SCA initialization, indexed by restart.
    Init(u32),
    Symbols,
    Oracle,
    Bootstrap,
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::Channel => 1,
            Purpose::Init(r) => 0x100 + r as u64,
            Purpose::Symbols => 2,
            Purpose::Oracle => 3,
            Purpose::Bootstrap => 4,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_seed(master: u64, trial: u64, purpose: Purpose) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ trial.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ purpose.code().wrapping_mul(0xA076_1D64_78BD_642F))
}

pub fn stream(master: u64, trial: u64, purpose: Purpose) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, trial, purpose))
}
