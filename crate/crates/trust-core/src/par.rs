//! Thin dispatch layer between rayon and plain iterators.
//!
//! Every helper produces output in input order, and reductions always fold
//! fixed-size chunks in chunk order, so results are bit-identical whether
//! the `parallel` feature is on or off and whatever the thread count is.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for deterministic partial reductions.
pub const CHUNK: usize = 4096;

/// Maps `f` over `items`, preserving order.
pub fn map_slice<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
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

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<U: Send, F>(n: usize, f: F) -> Vec<U>
where
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

/// Applies `f` to fixed-size chunks of `data` (chunk index, chunk slice) and
/// returns the per-chunk results in chunk order. Callers fold the result
/// sequentially, which keeps floating-point sums independent of the thread
/// count.
pub fn map_chunks<T: Sync, A: Send, F>(data: &[T], f: F) -> Vec<A>
where
    F: Fn(usize, &[T]) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        data.par_chunks(CHUNK)
            .enumerate()
            .map(|(i, ch)| f(i, ch))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks(CHUNK)
            .enumerate()
            .map(|(i, ch)| f(i, ch))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_helpers_preserve_order() {
        let xs: Vec<usize> = (0..10_000).collect();
        let doubled = map_slice(&xs, |x| x * 2);
        assert_eq!(doubled[777], 1554);
        let squares = map_range(100, |i| i * i);
        assert_eq!(squares[99], 9801);
    }

    #[test]
    fn chunked_sum_matches_sequential() {
        let xs: Vec<f64> = (0..50_000).map(|i| (i as f64).sin()).collect();
        let partials = map_chunks(&xs, |_, ch| ch.iter().sum::<f64>());
        let chunked: f64 = partials.iter().sum();
        let direct: f64 = xs.chunks(CHUNK).map(|ch| ch.iter().sum::<f64>()).sum();
        assert_eq!(chunked, direct);
    }
}
