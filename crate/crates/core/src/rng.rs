//! Reproducible random streams for parallel replicates.
//!
//! Every replicate gets its own set of ChaCha8 streams keyed by the master
//! seed. The stream number packs `(replicate, stream id)`, so the draws of a
//! replicate depend only on `(master_seed, replicate, stream)` and never on
//! which worker ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type SimRng = ChaCha8Rng;

/// Independent roles a replicate draws randomness for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    /// Tree shape, parent choices and urn draws.
    Tree = 0,
    /// Offsets eta attached to nodes or added balls.
    Offsets = 1,
    /// Event clocks of continuous-time growth.
    Clock = 2,
    /// Anything else a test or experiment needs (random node picks, ...).
    Aux = 3,
}

const STREAMS_PER_REPLICATE: u64 = 16;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Streams {
    master_seed: u64,
}

impl Streams {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn rng(&self, replicate: u64, stream: Stream) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(self.master_seed));
        rng.set_stream(replicate * STREAMS_PER_REPLICATE + stream as u64);
        rng
    }

    /// A 64-bit seed derived from `(master, replicate, stream)`, for recording.
    pub fn derived_seed(&self, replicate: u64, stream: Stream) -> u64 {
        mix64(mix64(self.master_seed) ^ mix64(replicate * STREAMS_PER_REPLICATE + stream as u64))
    }

    /// Child family of streams, e.g. one per configuration cell of a sweep.
    pub fn fork(&self, tag: u64) -> Streams {
        Streams::new(mix64(self.master_seed ^ mix64(tag.wrapping_add(0x5eed))))
    }
}

/// Maps `f` over replicate indices `0..count` on `workers` threads.
///
/// Results come back in replicate order, so any reduction done afterwards
/// is independent of the worker count.
pub fn run_replicates<T, F>(count: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    if workers <= 1 {
        return (0..count as u64).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..count as u64).into_par_iter().map(&f).collect()),
        Err(_) => (0..count as u64).map(f).collect(),
    }
}
