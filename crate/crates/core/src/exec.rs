//! Execution mode for the data-parallel loops (frames, grid points).
//!
//! With the `parallel` feature the loops run on rayon; without it every mode
//! degrades to the sequential path. Results are always gathered in input order,
//! so the mode never changes an output.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// The ambient rayon pool.
    Parallel,
    /// A dedicated pool with this many workers.
    Threads(usize),
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            #[cfg(feature = "parallel")]
            Execution::Threads(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
                Ok(pool) => pool.install(|| {
                    use rayon::prelude::*;
                    items.par_iter().map(f).collect()
                }),
                Err(err) => {
                    log::warn!("could not start a {n}-worker pool ({err}); running sequentially");
                    items.iter().map(f).collect()
                }
            },
            #[cfg(not(feature = "parallel"))]
            Execution::Parallel | Execution::Threads(_) => items.iter().map(f).collect(),
        }
    }

    pub fn try_map<T, R, E, F>(self, items: &[T], f: F) -> Result<Vec<R>, E>
    where
        T: Sync,
        R: Send,
        E: Send,
        F: Fn(&T) -> Result<R, E> + Sync + Send,
    {
        // Collecting in order keeps the first error deterministic.
        self.map(items, f).into_iter().collect()
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self != Execution::Sequential
    }
}
