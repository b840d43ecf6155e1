use std::num::NonZeroUsize;

use crate::error::{Error, Result};

/// Number of worker threads used for per-slice and per-image work.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Parallelism(NonZeroUsize);

impl Parallelism {
    pub fn new(threads: usize) -> Result<Self> {
        NonZeroUsize::new(threads)
            .map(Parallelism)
            .ok_or_else(|| Error::Shape("parallelism must be at least 1".into()))
    }

    pub fn sequential() -> Self {
        Parallelism(NonZeroUsize::MIN)
    }

    /// One thread per available core.
    pub fn available() -> Self {
        Parallelism(std::thread::available_parallelism().unwrap_or(NonZeroUsize::MIN))
    }

    pub fn threads(&self) -> usize {
        self.0.get()
    }

    /// Runs `op` inside a dedicated rayon pool of this size.
    pub fn install<R, F>(&self, op: F) -> R
    where
        R: Send,
        F: FnOnce() -> R + Send,
    {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads())
            .build()
        {
            Ok(pool) => pool.install(op),
            // thread spawning refused by the host; the global pool still works
            Err(_) => op(),
        }
    }
}

impl Default for Parallelism {
    fn default() -> Self {
        Self::available()
    }
}
