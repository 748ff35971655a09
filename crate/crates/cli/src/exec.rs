//! Worker pool with fixed-order reduction.

use rayon::prelude::*;

use crate::error::{CliError, CliResult};

pub trait Merge {
    fn merge(&mut self, other: Self);
}

impl<A: Merge> Merge for Vec<A> {
    fn merge(&mut self, other: Self) {
        assert_eq!(self.len(), other.len(), "merging accumulators of different shape");
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}

pub struct Exec {
    pool: rayon::ThreadPool,
    chunk: usize,
}

impl Exec {
    pub fn new(workers: usize, chunk: usize) -> CliResult<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
        Ok(Self { pool, chunk: chunk.max(1) })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// `f(i)` for `i < n`, returned in index order; the first error by index wins.
    pub fn map<R, F>(&self, n: usize, f: F) -> CliResult<Vec<R>>
    where
        R: Send,
        F: Fn(usize) -> CliResult<R> + Sync,
    {
        let out: Vec<CliResult<R>> = self.pool.install(|| (0..n).into_par_iter().map(&f).collect());
        out.into_iter().collect()
    }

    /// Folds `body` over `0..n`. Indices are grouped into chunks of fixed
    /// size, each chunk is folded sequentially, and chunk results are
    /// merged in chunk order, so the result does not depend on the number
    /// of workers.
    pub fn reduce<A, I, F>(&self, n: usize, init: I, body: F) -> CliResult<A>
    where
        A: Merge + Send,
        I: Fn() -> A + Sync,
        F: Fn(usize, &mut A) -> CliResult<()> + Sync,
    {
        let chunks = n.div_ceil(self.chunk);
        let parts = self.map(chunks, |c| {
            let mut acc = init();
            for i in c * self.chunk..((c + 1) * self.chunk).min(n) {
                body(i, &mut acc)?;
            }
            Ok(acc)
        })?;
        let mut total = init();
        for p in parts {
            total.merge(p);
        }
        Ok(total)
    }
}
