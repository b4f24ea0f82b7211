//! Data-parallel execution over fixed work chunks.
//!
//! Work is always split into the same chunks regardless of how many threads
//! run them, and results come back in chunk order, so any reduction over the
//! results is bit-stable across worker counts. Without the `parallel` feature
//! [`Exec::Parallel`] runs sequentially.

use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Whether this build can actually run work on more than one thread.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Splits `0..n` into consecutive ranges of at most `chunk` items.
pub fn chunks(n: usize, chunk: usize) -> Vec<Range<usize>> {
    let chunk = chunk.max(1);
    (0..n.div_ceil(chunk))
        .map(|i| i * chunk..((i + 1) * chunk).min(n))
        .collect()
}

/// Maps `f` over the chunks of `0..n`, returning results in chunk order.
pub fn map_chunks<R, F>(exec: Exec, n: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<usize>) -> R + Sync + Send,
{
    let ranges = chunks(n, chunk);
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            ranges.into_par_iter().map(f).collect()
        }
        _ => ranges.into_iter().map(f).collect(),
    }
}

/// Runs `f` on each item of a mutable slice of per-item outputs.
pub fn for_each_mut<T, F>(exec: Exec, items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t));
        }
        _ => items.iter_mut().enumerate().for_each(|(i, t)| f(i, t)),
    }
}

/// Maps over owned items, preserving order.
pub fn map_vec<I, R, F>(exec: Exec, items: Vec<I>, f: F) -> Vec<R>
where
    I: Send,
    R: Send,
    F: Fn(I) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.into_par_iter().map(f).collect()
        }
        _ => items.into_iter().map(f).collect(),
    }
}

/// Runs `f` with at most `workers` threads available to [`Exec::Parallel`]
/// work started inside it.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
            return pool.install(f);
        }
    }
    let _ = workers;
    f()
}
