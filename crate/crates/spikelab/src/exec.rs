//! Trial dispatch.
//!
//! With the `parallel` feature trials run on a rayon pool; without it, or
//! with [`Execution::Serial`], they run in index order on the calling thread.
//! Results always come back ordered by trial index, so any fold over them is
//! independent of the schedule.

use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Serial,
    /// `threads: None` uses every available core.
    Parallel { threads: Option<usize> },
}

impl Default for Execution {
    fn default() -> Self {
        Execution::Parallel { threads: None }
    }
}

impl Execution {
    pub fn threads(threads: Option<usize>) -> Self {
        match threads {
            Some(1) => Execution::Serial,
            t => Execution::Parallel { threads: t },
        }
    }
}

/// Runs `f(0..n)` and collects the results in index order. The first error
/// (lowest index) wins.
pub fn map_trials<T, F>(n: usize, exec: Execution, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    match exec {
        Execution::Serial => (0..n).map(f).collect(),
        Execution::Parallel { threads } => parallel(n, threads, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel<T, F>(n: usize, threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| crate::Error::Numerical(format!("could not start worker pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| (0..n).into_par_iter().map(&f).collect());
    results.into_iter().collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel<T, F>(n: usize, _threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn order_is_preserved() {
        let s = map_trials(100, Execution::Serial, |i| Ok(i * i)).unwrap();
        let p = map_trials(100, Execution::Parallel { threads: Some(3) }, |i| Ok(i * i)).unwrap();
        assert_eq!(s, p);
    }

    #[test]
    fn errors_propagate() {
        let r: Result<Vec<usize>> = map_trials(10, Execution::default(), |i| {
            if i == 4 {
                Err(Error::Numerical("boom".into()))
            } else {
                Ok(i)
            }
        });
        assert!(r.is_err());
    }
}
