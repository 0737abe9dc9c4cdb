//! Seeded substreams and a block-parallel runner whose output does not
//! depend on how many worker threads are used.
//!
//! Draw `i` always comes from block `i / BLOCK_SIZE`, and every block owns a
//! ChaCha stream keyed by `(seed, stream_id)` with the block index as the
//! stream number. Block results are combined by a fixed pairwise tree.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Draws per block.
pub const BLOCK_SIZE: usize = 1024;

pub type BlockRng = ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Same seed, different stream.
    pub fn with_stream(&self, stream_id: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id,
        }
    }

    fn key(&self) -> [u8; 32] {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream_id.to_le_bytes());
        key
    }

    /// Generator for one block of draws.
    pub fn block_rng(&self, block: u64) -> BlockRng {
        let mut rng = ChaCha12Rng::from_seed(self.key());
        rng.set_stream(block);
        rng
    }

    /// Generator for purely sequential use.
    pub fn rng(&self) -> BlockRng {
        self.block_rng(0)
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Welford {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &Welford) -> Welford {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let (na, nb, n) = (self.count as f64, other.count as f64, count as f64);
        let delta = other.mean - self.mean;
        Welford {
            count,
            mean: self.mean + delta * nb / n,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n,
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Merge adjacent pairs until one value is left. The tree shape depends
/// only on `items.len()`.
pub fn pairwise_reduce<T>(mut items: Vec<T>, merge: impl Fn(T, T) -> T) -> Option<T> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Run `body(range, rng)` on every block covering `0..n_items`, using up to
/// `workers` threads. Results come back in block order.
pub fn map_blocks<T, F>(stream: RandomStream, n_items: usize, workers: usize, body: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(std::ops::Range<usize>, &mut BlockRng) -> Result<T> + Sync,
{
    let n_blocks = n_items.div_ceil(BLOCK_SIZE);
    let run = |b: usize| {
        let start = b * BLOCK_SIZE;
        let end = (start + BLOCK_SIZE).min(n_items);
        let mut rng = stream.block_rng(b as u64);
        body(start..end, &mut rng)
    };
    if workers <= 1 {
        return (0..n_blocks).map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| (0..n_blocks).into_par_iter().map(run).collect())
}
