//! Order-preserving parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) this fans work out over rayon;
//! without it, or when the caller asks for single-thread execution, it is a
//! plain loop. Results come back in input order either way, so callers see
//! identical output regardless of mode.

/// Apply `f` to `0..n`, optionally in parallel.
pub fn map_indexed<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

/// True when the crate was built with rayon support.
pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}
