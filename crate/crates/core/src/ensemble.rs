//! Deterministic parallel replicate execution.
//!
//! Replicates are embarrassingly parallel: each owns a counter-based noise
//! stream keyed by its index, and results are collected in replicate order
//! before any reduction, so the worker count never changes an output bit.

use rayon::prelude::*;

/// Map `f` over replicate indices `0..reps` with the given worker count
/// (`0` uses the rayon default). The result vector is ordered by replicate
/// index regardless of scheduling.
pub fn run_replicates<T, F>(reps: u32, parallelism: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u32) -> T + Sync + Send,
{
    match parallelism {
        1 => (0..reps).map(f).collect(),
        0 => (0..reps).into_par_iter().map(f).collect(),
        n => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("worker pool")
            .install(|| (0..reps).into_par_iter().map(f).collect()),
    }
}
