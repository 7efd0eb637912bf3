//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) indexed maps run on the rayon pool;
//! without it, or inside [`with_execution`]`(Execution::Sequential, ..)`, they
//! run in index order on the calling thread. Results are always returned in
//! index order and reductions are done sequentially afterwards, so numeric
//! output does not depend on the worker count.

use std::cell::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

thread_local! {
    static MODE: Cell<Execution> = const { Cell::new(Execution::Parallel) };
}

/// Run `f` with indexed maps on this thread forced to `exec`.
pub fn with_execution<R>(exec: Execution, f: impl FnOnce() -> R) -> R {
    let prev = MODE.with(|m| m.replace(exec));
    let out = f();
    MODE.with(|m| m.set(prev));
    out
}

pub fn current_execution() -> Execution {
    if cfg!(feature = "parallel") {
        MODE.with(|m| m.get())
    } else {
        Execution::Sequential
    }
}

/// `(0..len).map(f).collect()`, possibly in parallel.
pub fn map_indexed<R, F>(len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match current_execution() {
        Execution::Sequential => (0..len).map(f).collect(),
        Execution::Parallel => par_map(len, f),
    }
}

#[cfg(feature = "parallel")]
fn par_map<R, F>(len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    (0..len).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<R, F>(len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..len).map(f).collect()
}

/// Mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
