//! Execution backend: data-parallel with rayon, or sequential.
//!
//! All batch work in the crate funnels through these helpers. With the
//! `parallel` feature (default) they fan out over rayon and collect results
//! in input order; without it they run plain loops. Both paths produce
//! identical output — reductions over the collected vectors always happen
//! sequentially in index order, so floating-point results do not depend on
//! thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, preserving index order in the output.
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Map `f` over a slice, preserving order.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Map a fallible `f` over `0..n`, preserving index order; the first
/// error (by index) wins.
pub fn try_map_range<U, E, F>(n: usize, f: F) -> Result<Vec<U>, E>
where
    U: Send,
    E: Send,
    F: Fn(usize) -> Result<U, E> + Sync + Send,
{
    let results = map_range(n, f);
    results.into_iter().collect()
}

/// Whether this build executes batch work in parallel.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Cap the worker-thread count for the process-wide pool.
///
/// Returns `false` when the pool was already initialised (or the build is
/// sequential), in which case the call has no effect.
pub fn configure_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}
