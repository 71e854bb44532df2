use nfwb_core::diffusion::{BatchExecutor, JobOutput};
use rayon::prelude::*;

/// Runs jobs on the rayon pool; results keep index order.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonExecutor;

impl BatchExecutor for RayonExecutor {
    fn run(&self, jobs: usize, job: &(dyn Fn(usize) -> nfwb_core::Result<JobOutput> + Sync)) -> nfwb_core::Result<Vec<JobOutput>> {
        (0..jobs).into_par_iter().map(job).collect()
    }
}

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "NFWB_THREADS";

/// Sizes the global pool from [`THREADS_ENV`] if it is set.
pub fn init_thread_pool() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| anyhow::anyhow!("{THREADS_ENV}={v} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}
