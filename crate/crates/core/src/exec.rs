//! Worker-pool plumbing. Results never depend on the worker count: every
//! parallel map is indexed and collected in index order.

use rayon::ThreadPoolBuilder;

/// Runs `f` inside a dedicated pool of `workers` threads (`None` uses the
/// global pool).
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match workers {
        None => f(),
        Some(n) => ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("failed to build worker pool")
            .install(f),
    }
}
