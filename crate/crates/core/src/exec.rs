//! Data-parallel dispatch for per-item and per-channel work.
//!
//! With the `parallel` feature (default) the helpers fan out over rayon;
//! without it, or after [`set_mode`]`(ExecMode::Sequential)`, they run on the
//! calling thread. Callers only ever parallelise independent items and do
//! any cross-item reduction themselves in index order, so both modes produce
//! bitwise identical results.

use std::sync::atomic::{AtomicU8, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

const SEQUENTIAL: u8 = 0;
const PARALLEL: u8 = 1;

static MODE: AtomicU8 = AtomicU8::new(if cfg!(feature = "parallel") {
    PARALLEL
} else {
    SEQUENTIAL
});

/// Selects the execution mode process-wide. `Parallel` silently degrades to
/// sequential when the crate is built without the `parallel` feature.
pub fn set_mode(mode: ExecMode) {
    let raw = match mode {
        ExecMode::Parallel if cfg!(feature = "parallel") => PARALLEL,
        _ => SEQUENTIAL,
    };
    MODE.store(raw, Ordering::Relaxed);
}

pub fn mode() -> ExecMode {
    match MODE.load(Ordering::Relaxed) {
        PARALLEL => ExecMode::Parallel,
        _ => ExecMode::Sequential,
    }
}

/// Runs `f(i)` for `i in 0..n` and collects the results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode() == ExecMode::Parallel {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Splits `data` into consecutive chunks of `chunk_len` and runs
/// `f(index, chunk)` on each, collecting the return values in index order.
pub fn map_chunks_mut<T, F>(data: &mut [f32], chunk_len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut [f32]) -> T + Sync + Send,
{
    assert!(chunk_len > 0, "chunk length must be positive");
    #[cfg(feature = "parallel")]
    if mode() == ExecMode::Parallel {
        return data
            .par_chunks_mut(chunk_len)
            .enumerate()
            .map(|(i, c)| f(i, c))
            .collect();
    }
    data.chunks_mut(chunk_len)
        .enumerate()
        .map(|(i, c)| f(i, c))
        .collect()
}

/// Like [`map_chunks_mut`] but discards results.
pub fn for_each_chunk_mut<F>(data: &mut [f32], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [f32]) + Sync + Send,
{
    map_chunks_mut(data, chunk_len, f);
}

/// Runs `f(index, item)` on every element of `items`.
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode() == ExecMode::Parallel {
        items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t));
        return;
    }
    items.iter_mut().enumerate().for_each(|(i, t)| f(i, t));
}
