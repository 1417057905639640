//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the maps run on the rayon pool unless the
//! process-wide mode has been switched to [`Execution::Sequential`]. Every
//! output element is computed independently, so both modes give bit-identical
//! results.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

static MODE: AtomicU8 = AtomicU8::new(1);

pub fn set_execution(mode: Execution) {
    MODE.store(matches!(mode, Execution::Parallel) as u8, Ordering::Relaxed);
}

pub fn execution() -> Execution {
    if cfg!(feature = "parallel") && MODE.load(Ordering::Relaxed) == 1 {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if execution() == Execution::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Calls `f(i, chunk)` on consecutive chunks of `data`.
pub fn for_chunks_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if execution() == Execution::Parallel {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Pairwise sum; the split points depend only on the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
