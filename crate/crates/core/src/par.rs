//! Trial-level parallelism with results returned in trial order.

use std::sync::OnceLock;

use rayon::prelude::*;

/// Environment variable that overrides the worker count.
pub const WORKERS_ENV: &str = "TORUS_COVER_WORKERS";

fn pool() -> Option<&'static rayon::ThreadPool> {
    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| {
        let k: usize = std::env::var(WORKERS_ENV).ok()?.trim().parse().ok()?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .ok()
    })
    .as_ref()
}

/// Runs `f(trial)` for every trial index and returns the outputs in index
/// order, so any later fold is independent of scheduling.
pub fn map_trials<T, F>(trials: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let run = || (0..trials).into_par_iter().map(&f).collect::<Vec<T>>();
    match pool() {
        Some(p) => p.install(run),
        None => run(),
    }
}
