//! Internal fan-out helpers: rayon when the `parallel` feature is on,
//! plain iteration otherwise. Every call site maps an indexed domain to a
//! `Vec`, so output order (and therefore every downstream artifact) is
//! identical in both modes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, collecting results in index order.
pub(crate) fn map_range<U, F>(n: usize, f: F) -> Vec<U>
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

/// Maps `f` over a slice, collecting results in element order.
pub(crate) fn map_slice<'a, T, U, F>(items: &'a [T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&'a T) -> U + Sync + Send,
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

/// Sorts `items` by a key, unstably. Ties must not exist or must not
/// matter to callers; both backends give the same result under that
/// contract.
pub(crate) fn sort_by_key<T, K, F>(items: &mut [T], f: F)
where
    T: Send,
    K: Ord + Send,
    F: Fn(&T) -> K + Sync,
{
    #[cfg(feature = "parallel")]
    {
        items.par_sort_unstable_by_key(f);
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.sort_unstable_by_key(f);
    }
}
