use rayon::prelude::*;

use crate::{Error, Result};

/// Evaluates `task(i)` for `i in 0..count` on `workers` threads and returns
/// the results in index order, so the output never depends on `workers`.
pub(crate) fn map_indexed<T, F>(workers: usize, count: usize, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers <= 1 {
        return Ok((0..count).map(task).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Pool(e.to_string()))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(task).collect()))
}
