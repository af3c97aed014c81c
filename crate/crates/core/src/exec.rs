//! Replication scheduling: rayon when the `parallel` feature is on, a plain
//! loop otherwise. Results always come back in index order.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Executor {
    Sequential,
    /// Worker pool with the given thread count; `0` uses rayon's global pool.
    Parallel { threads: usize },
}

impl Default for Executor {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Executor::Parallel { threads: 0 }
        } else {
            Executor::Sequential
        }
    }
}

impl Executor {
    /// Reads a thread cap where `0` means automatic and `1` means sequential.
    pub fn with_threads(threads: usize) -> Self {
        match threads {
            1 => Executor::Sequential,
            n => Executor::Parallel { threads: n },
        }
    }

    /// Evaluates `f(0..n)` and returns the results in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match *self {
            Executor::Sequential => (0..n).map(f).collect(),
            Executor::Parallel { threads } => parallel_map(threads, n, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(threads: usize, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;

    let run = || (0..n).into_par_iter().map(&f).collect();
    if threads == 0 {
        return run();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(_threads: usize, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
