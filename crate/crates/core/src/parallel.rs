//! Order-preserving data-parallel helpers.
//!
//! With the `parallel` feature (default) these fan work out over rayon;
//! without it they degrade to plain sequential loops. Every helper maps
//! independent items and collects results in input order, and callers reduce
//! sequentially, so outputs are byte-identical whichever path runs and
//! whatever the pool size is.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Cap the global thread pool at `n` threads (0 leaves the default).
///
/// Must be called before the pool is first used; later calls are ignored
/// (rayon builds its global pool once). Without the `parallel` feature this
/// is a no-op.
pub fn configure_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        if n > 0 {
            // Error means the pool already exists; keep whatever it was.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
}

/// Number of worker threads the maps below will use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Map `f` over `items`, preserving order.
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

/// Map `f` over owned items, preserving order.
pub fn map_into<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Map `f` over index chunks of `0..len`, preserving chunk order.
///
/// Used by kernels that want one task per row block instead of per element.
pub fn map_chunks<U, F>(len: usize, chunk: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(std::ops::Range<usize>) -> U + Sync + Send,
{
    assert!(chunk > 0, "chunk size must be positive");
    let ranges: Vec<std::ops::Range<usize>> = (0..len)
        .step_by(chunk)
        .map(|start| start..usize::min(start + chunk, len))
        .collect();
    #[cfg(feature = "parallel")]
    {
        ranges.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.into_iter().map(f).collect()
    }
}

/// Apply `f` to consecutive chunks of `data` (chunk index, chunk slice).
///
/// The parallel path hands disjoint chunks to workers; chunk contents are
/// computed independently, so results match the sequential path bit for bit.
pub fn for_chunks_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0, "chunk size must be positive");
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Run `f` on a private pool of `n` threads (1 gives a truly single-threaded
/// run regardless of the global pool). Sequential builds just call `f`.
pub fn with_threads<R: Send>(n: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("building local thread pool");
        pool.install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_slice_preserves_order() {
        let items: Vec<u64> = (0..1000).collect();
        let out = map_slice(&items, |x| x * 2);
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn map_chunks_covers_range() {
        let chunks = map_chunks(10, 3, |r| r.collect::<Vec<_>>());
        let flat: Vec<usize> = chunks.into_iter().flatten().collect();
        assert_eq!(flat, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn single_thread_pool_matches_default() {
        let items: Vec<u64> = (0..100).collect();
        let seq = with_threads(1, || map_slice(&items, |x| x * x));
        let par = map_slice(&items, |x| x * x);
        assert_eq!(seq, par);
    }
}
