//! Deterministic parallel execution.
//!
//! Work is split into index ranges whose boundaries do not depend on the
//! worker count, and results are reassembled in index order, so the output
//! of every map is identical for any number of workers.

use alloc::vec::Vec;

#[cfg(feature = "std")]
use alloc::sync::Arc;

#[derive(Clone)]
pub struct Exec {
    workers: usize,
    #[cfg(feature = "std")]
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl core::fmt::Debug for Exec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Exec")
            .field("workers", &self.workers)
            .finish()
    }
}

impl Default for Exec {
    fn default() -> Self {
        #[cfg(feature = "std")]
        {
            let n = std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1);
            Exec::with_workers(n)
        }
        #[cfg(not(feature = "std"))]
        {
            Exec::sequential()
        }
    }
}

impl Exec {
    pub fn sequential() -> Self {
        Exec {
            workers: 1,
            #[cfg(feature = "std")]
            pool: None,
        }
    }

    /// Without the `std` feature this is always sequential.
    pub fn with_workers(workers: usize) -> Self {
        let workers = workers.max(1);
        #[cfg(feature = "std")]
        {
            if workers == 1 {
                return Exec::sequential();
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .ok()
                .map(Arc::new);
            Exec { workers, pool }
        }
        #[cfg(not(feature = "std"))]
        {
            let _ = workers;
            Exec::sequential()
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// `f(i)` for `i in 0..n`, in order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "std")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
        (0..n).map(f).collect()
    }

    /// Like [`Exec::map`] over chunks `[k * chunk, (k + 1) * chunk)`; the
    /// first error in index order wins.
    pub fn try_map_chunks<T, E, F>(&self, n: usize, chunk: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(core::ops::Range<usize>, &mut Vec<T>) -> Result<(), E> + Sync + Send,
    {
        let chunk = chunk.max(1);
        let n_chunks = n.div_ceil(chunk);
        let parts = self.map(n_chunks, |k| {
            let range = k * chunk..((k + 1) * chunk).min(n);
            let mut out = Vec::with_capacity(range.len());
            f(range, &mut out).map(|_| out)
        });
        let mut all = Vec::with_capacity(n);
        for part in parts {
            all.extend(part?);
        }
        Ok(all)
    }
}
