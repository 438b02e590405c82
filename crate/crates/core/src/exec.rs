//! Chunked execution helpers.
//!
//! Heavy operations come in pairs: the default entry point fans out across
//! threads when the `parallel` feature is on, and a `_seq` twin always runs
//! single-threaded. Work is split on fixed [`CHUNK`] boundaries and every
//! chunk derives its own RNG substream, so the two paths produce
//! bit-identical output (asserted in tests, compared in benches).

/// Samples per work unit. Also the stride of chunked RNG substreams; changing
/// it changes every noisy trace, so treat it like a file-format constant.
pub const CHUNK: usize = 1 << 16;

/// Apply `f(chunk_index, start_sample, chunk)` over `out` in CHUNK pieces.
pub fn for_each_chunk<F>(out: &mut [f64], f: F)
where
    F: Fn(usize, usize, &mut [f64]) + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(ci, chunk)| f(ci, ci * CHUNK, chunk));
    }
    #[cfg(not(feature = "parallel"))]
    for_each_chunk_seq(out, f);
}

/// Single-threaded twin of [`for_each_chunk`].
pub fn for_each_chunk_seq<F>(out: &mut [f64], f: F)
where
    F: Fn(usize, usize, &mut [f64]) + Sync,
{
    for (ci, chunk) in out.chunks_mut(CHUNK).enumerate() {
        f(ci, ci * CHUNK, chunk);
    }
}

/// Evaluate `f(0..n)` into a Vec, fanning out when `parallel` is on.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    map_indexed_seq(n, f)
}

/// Single-threaded twin of [`map_indexed`].
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
