//! Rollout executors for the `--jobs` flag.

use crate::error::{Error, Result};
use ctxsel_core::grpo::{Rollout, RolloutExecutor, Sequential};
use rayon::prelude::*;

/// Runs a group's rollouts on a private thread pool. Each rollout owns its
/// random stream, so the output does not depend on the thread count.
pub struct Parallel {
    pool: rayon::ThreadPool,
}

impl Parallel {
    pub fn new(threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
        Ok(Self { pool })
    }
}

impl RolloutExecutor for Parallel {
    fn run(
        &self,
        count: usize,
        job: &(dyn Fn(usize) -> ctxsel_core::Result<Rollout> + Sync),
    ) -> Vec<ctxsel_core::Result<Rollout>> {
        self.pool.install(|| (0..count).into_par_iter().map(job).collect())
    }
}

/// `jobs == 1` runs on the calling thread; `0` uses every core.
pub fn executor(jobs: usize) -> Result<Box<dyn RolloutExecutor>> {
    match jobs {
        1 => Ok(Box::new(Sequential)),
        0 => Parallel::new(std::thread::available_parallelism().map_or(1, |n| n.get())).map(|p| Box::new(p) as _),
        n => Parallel::new(n).map(|p| Box::new(p) as _),
    }
}
