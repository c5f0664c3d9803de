//! Deterministic random streams.
//!
//! Every stochastic draw goes through a SplitMix64 generator. A sweep cell
//! coordinate `(base_seed, k, t_delta, replicate)` is folded into a single
//! 64-bit stream seed with the SplitMix64 finalizer, one coordinate at a time:
//!
//! ```text
//! h0 = mix(base_seed ^ DOMAIN)
//! h1 = mix(h0 ^ k)
//! h2 = mix(h1 ^ t_delta)
//! h3 = mix(h2 ^ replicate)
//! mix(z) = finalize(z + 0x9e3779b97f4a7c15)
//! finalize(z) = z ^= z >> 30; z *= 0xbf58476d1ce4e5b9;
//!               z ^= z >> 27; z *= 0x94d049bb133111eb; z ^ (z >> 31)
//! ```
//!
//! Only wrapping 64-bit integer arithmetic is involved, so the streams are
//! identical on every platform. Each run then splits its seed into independent
//! per-use-site streams (weight matrix, partner draws).

use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

pub type Stream = SplitMix64;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const DOMAIN: u64 = 0x6f76_6572_746f_6e00;

const SITE_WEIGHTS: u64 = 0x5745_4947_4854_5300;
const SITE_DYNAMICS: u64 = 0x4459_4e41_4d49_4353;

/// SplitMix64 output function applied to `z + golden gamma`.
pub fn mix(z: u64) -> u64 {
    let mut z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the stream for one sweep coordinate.
pub fn derive_seed(base_seed: u64, k: u64, t_delta: u64, replicate: u64) -> u64 {
    let h = mix(base_seed ^ DOMAIN);
    let h = mix(h ^ k);
    let h = mix(h ^ t_delta);
    mix(h ^ replicate)
}

pub fn stream(seed: u64) -> Stream {
    SplitMix64::seed_from_u64(seed)
}

/// Coordinates identifying one replicate of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub base_seed: u64,
    pub k: u64,
    pub t_delta: u64,
    pub replicate: u64,
}

impl RngSeed {
    pub fn new(base_seed: u64, k: u64, t_delta: u64, replicate: u64) -> Self {
        Self {
            base_seed,
            k,
            t_delta,
            replicate,
        }
    }

    pub fn seed(&self) -> u64 {
        derive_seed(self.base_seed, self.k, self.t_delta, self.replicate)
    }

    pub fn streams(&self) -> RunStreams {
        RunStreams::new(self.seed())
    }
}

/// Independent streams for the two random use sites of a run.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub weights: Stream,
    pub dynamics: Stream,
}

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            weights: stream(mix(seed ^ SITE_WEIGHTS)),
            dynamics: stream(mix(seed ^ SITE_DYNAMICS)),
        }
    }
}
