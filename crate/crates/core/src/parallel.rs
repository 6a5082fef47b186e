//! Worker pools with scheduling-independent results.

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{Error, Result};

/// Runs indexed work either inline or on a dedicated rayon pool.
///
/// Results come back in index order, so reductions over them do not depend
/// on the worker count.
pub enum Executor {
    Serial,
    Pool(ThreadPool),
}

impl Executor {
    /// `workers <= 1` runs on the calling thread.
    pub fn new(workers: usize) -> Result<Self> {
        if workers <= 1 {
            return Ok(Executor::Serial);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map(Executor::Pool)
            .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
    }

    pub fn workers(&self) -> usize {
        match self {
            Executor::Serial => 1,
            Executor::Pool(p) => p.current_num_threads(),
        }
    }

    pub fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Executor::Serial => (0..len).map(f).collect(),
            Executor::Pool(p) => p.install(|| (0..len).into_par_iter().map(f).collect()),
        }
    }
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Executor({} workers)", self.workers())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_results() {
        let serial = Executor::new(1).unwrap();
        let pool = Executor::new(3).unwrap();
        assert_eq!(pool.workers(), 3);
        let a = serial.map(100, |i| i * i);
        let b = pool.map(100, |i| i * i);
        assert_eq!(a, b);
    }
}
