//! Deterministic data-parallel helpers.
//!
//! Reductions over floats are not associative, so naive parallel folds change
//! results with the thread count. Every batched reduction in this crate runs
//! through a fixed chunk tree instead: work splits into chunks of
//! [`CHUNK_SIZE`] items, each chunk is reduced sequentially in index order,
//! and the per-chunk partials are combined in chunk order. The result is
//! bit-identical whether chunks run on one thread, many threads, or with the
//! `parallel` feature disabled.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk width of the reduction tree. Fixed: changing it changes results at
/// the last-ulp level.
pub const CHUNK_SIZE: usize = 16;

/// Caps the global rayon pool at `n` threads. Call once, before any parallel
/// work; later calls (or calls after the pool exists) are ignored. Without
/// the `parallel` feature this is a no-op.
pub fn configure_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
    }
}

/// Splits `0..n_items` into consecutive ranges of at most `chunk` items.
pub fn chunk_ranges(n_items: usize, chunk: usize) -> Vec<Range<usize>> {
    assert!(chunk > 0);
    (0..n_items.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(n_items))
        .collect()
}

/// Maps each chunk range to a partial result, sequentially.
pub fn map_chunks_seq<T, F>(n_items: usize, chunk: usize, f: F) -> Vec<T>
where
    F: Fn(Range<usize>) -> T + Sync + Send,
    T: Send,
{
    chunk_ranges(n_items, chunk).into_iter().map(f).collect()
}

/// Maps each chunk range to a partial result on the rayon pool. Output order
/// matches chunk order regardless of scheduling.
#[cfg(feature = "parallel")]
pub fn map_chunks_par<T, F>(n_items: usize, chunk: usize, f: F) -> Vec<T>
where
    F: Fn(Range<usize>) -> T + Sync + Send,
    T: Send,
{
    chunk_ranges(n_items, chunk).into_par_iter().map(f).collect()
}

/// Feature-dispatching entry point used by the rest of the crate.
pub fn map_chunks<T, F>(n_items: usize, chunk: usize, f: F) -> Vec<T>
where
    F: Fn(Range<usize>) -> T + Sync + Send,
    T: Send,
{
    #[cfg(feature = "parallel")]
    {
        map_chunks_par(n_items, chunk, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_chunks_seq(n_items, chunk, f)
    }
}

/// Maps `f` over `0..n_items`, preserving index order in the output.
pub fn map_items<T, F>(n_items: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
    T: Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n_items).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_items).map(f).collect()
    }
}

/// Chunk-tree sum of `f(i)` for `i` in `0..n_items`.
pub fn sum_items<F>(n_items: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let partials = map_chunks(n_items, CHUNK_SIZE, |range| {
        range.map(&f).sum::<f64>()
    });
    partials.into_iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_ranges_cover_everything_once() {
        let ranges = chunk_ranges(37, 16);
        assert_eq!(ranges, vec![0..16, 16..32, 32..37]);
        let ranges = chunk_ranges(0, 16);
        assert!(ranges.is_empty());
    }

    #[test]
    fn seq_and_dispatch_agree_bitwise() {
        let f = |r: std::ops::Range<usize>|r.map(|i| ((i as f64) * 0.37).sin()).sum::<f64>();
        let a: f64 = map_chunks_seq(1000, CHUNK_SIZE, f).into_iter().sum();
        let b: f64 = map_chunks(1000, CHUNK_SIZE, f).into_iter().sum();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn par_matches_seq_bitwise() {
        let f = |r: std::ops::Range<usize>| r.map(|i| 1.0 / (1.0 + i as f64)).sum::<f64>();
        let a: f64 = map_chunks_seq(5000, CHUNK_SIZE, f).into_iter().sum();
        let b: f64 = map_chunks_par(5000, CHUNK_SIZE, f).into_iter().sum();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn map_items_preserves_order() {
        let out = map_items(100, |i| i * 2);
        assert_eq!(out, (0..100).map(|i| i * 2).collect::<Vec<_>>());
    }
}
