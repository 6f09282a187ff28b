//! Deterministic block-parallel map.
//!
//! Results always come back in index order, so a sequential fold over them
//! is independent of the worker count.

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Runs `f` over `0..n` in waves of `wave` indices and hands each result to
/// `sink` in index order. Keeps at most one wave of results alive.
pub fn for_each_ordered<T, F, S>(n: usize, wave: usize, f: F, mut sink: S) -> crate::Result<()>
where
    T: Send,
    F: Fn(usize) -> crate::Result<T> + Sync + Send,
    S: FnMut(T),
{
    let wave = wave.max(1);
    let mut start = 0;
    while start < n {
        let len = wave.min(n - start);
        for r in map_indexed(len, |i| f(start + i)) {
            sink(r?);
        }
        start += len;
    }
    Ok(())
}

/// Worker count used to size waves.
pub fn workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
