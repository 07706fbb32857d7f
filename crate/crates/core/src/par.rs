//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the helpers dispatch to rayon; without it they
//! run the identical computation on the calling thread. Reductions always
//! combine results in index order, so outputs are bit-identical regardless of
//! the feature or the number of worker threads.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed chunk size for ordered reductions. Chunk boundaries never depend on
/// the thread count.
pub const REDUCE_CHUNK: usize = 1024;

pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
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

pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
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

/// Applies `f` to every mutable element, with its index.
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }
}

/// Splits `0..n` into fixed chunks, folds each chunk into its own accumulator
/// (possibly in parallel) and then merges the accumulators sequentially in
/// chunk order.
pub fn chunked_fold<A, I, F, M>(n: usize, init: I, fold: F, mut merge: M) -> Option<A>
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize) + Sync + Send,
    M: FnMut(&mut A, A),
{
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let partial = map_range(chunks, |c| {
        let mut acc = init();
        let end = ((c + 1) * REDUCE_CHUNK).min(n);
        for i in c * REDUCE_CHUNK..end {
            fold(&mut acc, i);
        }
        acc
    });
    let mut iter = partial.into_iter();
    let mut total = iter.next()?;
    for acc in iter {
        merge(&mut total, acc);
    }
    Some(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_fold_is_ordered() {
        let n = 3 * REDUCE_CHUNK + 17;
        let v = chunked_fold(
            n,
            Vec::new,
            |acc: &mut Vec<usize>, i| acc.push(i),
            |a, b| a.extend(b),
        )
        .unwrap();
        assert_eq!(v, (0..n).collect::<Vec<_>>());
        assert!(chunked_fold(0, || 0, |_, _| {}, |_, _| {}).is_none());
    }

    #[test]
    fn map_preserves_order() {
        let xs: Vec<i32> = (0..1000).collect();
        assert_eq!(map(&xs, |x| x * 2), (0..1000).map(|x| x * 2).collect::<Vec<_>>());
    }
}
