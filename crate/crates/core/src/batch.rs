//! Batch evaluation helpers: data-parallel over candidates when the
//! `parallel` feature is enabled, sequential otherwise.
//!
//! Results are always collected in input order, so callers that reduce them
//! sequentially (argmin scans, best-so-far traces, reward consumption) get
//! bit-identical output from both paths.

/// Sequential reference path.
pub fn map_seq<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U + Sync,
{
    items.iter().map(f).collect()
}

/// Rayon path; preserves input order.
#[cfg(feature = "parallel")]
pub fn map_par<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

/// Default dispatch used by the library.
pub fn map<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_par(items, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_seq(items, f)
    }
}
