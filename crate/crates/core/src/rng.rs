//! Reproducible random streams.
//!
//! Every Monte Carlo estimator splits its samples into fixed-size blocks.
//! Block `k` draws from ChaCha8 stream `k` under the user's 64-bit seed, so
//! the sequence of draws depends only on `(seed, sample count)` and never on
//! how blocks are scheduled across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// The counter-based generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Samples per independent stream.
pub const BLOCK_SIZE: usize = 4096;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Lengths of the blocks covering `total` samples.
pub fn block_lengths(total: usize) -> Vec<usize> {
    let full = total / BLOCK_SIZE;
    let mut lens = vec![BLOCK_SIZE; full];
    if !total.is_multiple_of(BLOCK_SIZE) {
        lens.push(total % BLOCK_SIZE);
    }
    lens
}

/// Runs `work(rng, block_len)` once per block and returns the results in
/// block order. `workers == 0` uses the global rayon pool, `1` runs serially.
pub fn run_blocks<T, F>(seed: u64, total: usize, workers: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut StreamRng, usize) -> T + Sync + Send,
{
    let lens = block_lengths(total);
    let job = |(k, len): (usize, &usize)| {
        let mut rng = stream_rng(seed, k as u64);
        work(&mut rng, *len)
    };
    match workers {
        1 => lens.iter().enumerate().map(job).collect(),
        0 => lens.par_iter().enumerate().map(job).collect(),
        w => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(|| lens.par_iter().enumerate().map(job).collect()),
            Err(_) => lens.iter().enumerate().map(job).collect(),
        },
    }
}
