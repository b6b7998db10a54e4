//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the `map_*` functions dispatch to
//! rayon once the workload is large enough to amortize the fork-join
//! overhead; below the threshold, and always in `--no-default-features`
//! builds, they run the plain sequential loop. The `*_seq` variants are kept
//! public so the bench suite can compare both paths in one binary.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum per-call work (in rough flop units) before rayon is used.
pub const PAR_THRESHOLD: usize = 1 << 16;

pub fn map_indexed_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Map `f` over `0..n`, in parallel when `work_per_item * n` is large enough.
#[cfg(feature = "parallel")]
pub fn map_indexed<U, F>(n: usize, work_per_item: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    if n.saturating_mul(work_per_item) >= PAR_THRESHOLD && n > 1 {
        (0..n).into_par_iter().map(f).collect()
    } else {
        map_indexed_seq(n, f)
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<U, F>(n: usize, _work_per_item: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    map_indexed_seq(n, f)
}

pub fn map_slice_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Map `f` over a slice, in parallel when the workload warrants it.
#[cfg(feature = "parallel")]
pub fn map_slice<T, U, F>(items: &[T], work_per_item: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    if items.len().saturating_mul(work_per_item) >= PAR_THRESHOLD && items.len() > 1 {
        items.par_iter().map(f).collect()
    } else {
        map_slice_seq(items, f)
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_slice<T, U, F>(items: &[T], _work_per_item: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    map_slice_seq(items, f)
}

/// Cap the global rayon pool, e.g. from the `CM_THREADS` env var.
/// No-op on sequential builds or if a pool already exists.
pub fn limit_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
}
