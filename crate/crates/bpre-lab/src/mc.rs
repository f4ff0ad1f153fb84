//! Deterministic parallel Monte Carlo driver.
//!
//! Replicates are partitioned into fixed-size blocks; block `i` draws all of
//! its randomness from the ChaCha stream `i` of the master seed, and block
//! results are folded in block order. Results are therefore bit-identical
//! for any shard (worker thread) count, including 1.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub const BLOCK_SIZE: u64 = 4096;

/// The RNG for one block of replicates.
pub fn block_rng(seed: u64, block_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block_index);
    rng
}

/// Runs `n_samples` replicates split into blocks, applying `f(rng, start,
/// count)` per block, on `shards` worker threads. Returns per-block results
/// in block order.
pub fn run_blocks<T, F>(seed: u64, n_samples: u64, shards: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64, u64) -> T + Sync,
{
    let n_blocks = n_samples.div_ceil(BLOCK_SIZE);
    let run_one = |b: u64| {
        let start = b * BLOCK_SIZE;
        let count = BLOCK_SIZE.min(n_samples - start);
        let mut rng = block_rng(seed, b);
        f(&mut rng, start, count)
    };
    if shards <= 1 {
        (0..n_blocks).map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(shards)
            .build()
            .expect("thread pool");
        pool.install(|| (0..n_blocks).into_par_iter().map(run_one).collect())
    }
}
