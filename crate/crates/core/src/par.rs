//! Indexed parallel map with a sequential fallback.
//!
//! With the `parallel` feature, work runs on a rayon pool sized by `jobs`
//! (`0` = all cores). Results always come back in index order, so output is
//! independent of the job count.

/// Worker threads to use; `0` means one per core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Jobs(pub usize);

impl Jobs {
    pub const SEQUENTIAL: Jobs = Jobs(1);
    pub const ALL: Jobs = Jobs(0);
}

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, jobs: Jobs, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    use rayon::prelude::*;

    if jobs.0 == 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let run = || (0..n).into_par_iter().map(&f).collect();
    if jobs.0 == 0 {
        return run();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.0).build() {
        Ok(pool) => pool.install(run),
        Err(_) => (0..n).map(&f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, _jobs: Jobs, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    (0..n).map(f).collect()
}

/// Like [`map_indexed`] but stops at the first error in index order.
pub fn try_map_indexed<T, E, F>(n: usize, jobs: Jobs, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Send + Sync,
{
    map_indexed(n, jobs, f).into_iter().collect()
}
