//! Trial-level data parallelism.
//!
//! Trials are independent jobs whose results come back in index order, so
//! the output never depends on scheduling. With the `parallel` feature
//! disabled every execution mode runs sequentially.

use std::str::FromStr;

use crate::error::{Error, Result};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "FDDMIMO_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Data-parallel over trials with [`WORKERS_ENV`] workers, or one per core.
    #[default]
    Parallel,
    /// Data-parallel with an explicit worker count.
    ParallelWith(usize),
}

impl FromStr for Execution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sequential" => Ok(Self::Sequential),
            "parallel" => Ok(Self::Parallel),
            other => Err(Error::Config(format!("unknown execution mode `{other}`"))),
        }
    }
}

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

/// `(0..n).map(job)`, possibly spread over worker threads; results keep index order.
pub fn map_indexed<T, F>(n: usize, exec: Execution, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(job).collect(),
        Execution::Parallel => run_parallel(n, workers_from_env()?, job),
        Execution::ParallelWith(w) => run_parallel(n, Some(w.max(1)), job),
    }
}

#[cfg(feature = "parallel")]
fn run_parallel<T, F>(n: usize, workers: Option<usize>, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&job).collect())
}

#[cfg(not(feature = "parallel"))]
fn run_parallel<T, F>(n: usize, _workers: Option<usize>, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).map(job).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let job = |i: usize| Ok(i * i);
        let seq = map_indexed(100, Execution::Sequential, job).unwrap();
        assert_eq!(seq, (0..100).map(|i| i * i).collect::<Vec<_>>());
        assert_eq!(map_indexed(100, Execution::ParallelWith(4), job).unwrap(), seq);
    }

    #[test]
    fn first_error_surfaces() {
        let r = map_indexed(10, Execution::ParallelWith(2), |i| {
            if i == 7 {
                Err(Error::InvalidInput("seven".into()))
            } else {
                Ok(i)
            }
        });
        assert!(r.is_err());
    }
}
