//! Execution strategy for the data-parallel loops (Monte Carlo paths, hedge
//! batches, large reductions).
//!
//! With the `parallel` feature (on by default) work is spread over the rayon
//! global pool; without it every strategy runs on the calling thread. Results
//! never depend on the strategy: each work item owns its inputs, outputs are
//! collected in index order, and reductions combine fixed-size chunks in order.

use crate::numerics::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run work in parallel.
    pub const fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Chunk size for ordered reductions; fixed so sums are reproducible.
pub const REDUCTION_CHUNK: usize = 4096;

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Compensated sum of `f(x)` over `items`, reduced chunk by chunk in order.
pub fn ordered_sum<T, F>(items: &[T], exec: Execution, f: F) -> f64
where
    T: Sync,
    F: Fn(&T) -> f64 + Sync + Send,
{
    let n_chunks = items.len().div_ceil(REDUCTION_CHUNK);
    let partials = map_indexed(n_chunks, exec, |k| {
        let lo = k * REDUCTION_CHUNK;
        let hi = (lo + REDUCTION_CHUNK).min(items.len());
        items[lo..hi].iter().map(&f).collect::<CompensatedSum>()
    });
    let mut total = CompensatedSum::new();
    for p in &partials {
        total.merge(p);
    }
    total.value()
}
