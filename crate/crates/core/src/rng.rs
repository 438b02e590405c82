//! Deterministic substream seeding.
//!
//! Every stochastic term draws from its own ChaCha8 stream derived from the
//! master seed, so adding a noise term, reordering evaluation, or changing
//! the thread count never perturbs the other terms. Chunked generators
//! additionally fold the chunk index into the stream id, which is what makes
//! the parallel and sequential synthesis paths bit-identical.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stable purpose tags for RNG substreams. Values are part of the on-disk
/// reproducibility contract (a manifest's seed only replays if these hold),
/// so never renumber, only append.
pub mod stream {
    /// Droplet-rate random walk.
    pub const RATE_WALK: u64 = 1;
    /// Per-droplet loading factors.
    pub const LOADING: u64 = 2;
    /// Shot noise (chunked).
    pub const SHOT: u64 = 3;
    /// Background white noise (chunked).
    pub const BACKGROUND: u64 = 4;
    /// Brownian kinetics; particle index folds into the id.
    pub const KINETICS: u64 = 5;
    /// Titration per-point acquisitions; point index folds into the id.
    pub const TITRATION: u64 = 6;

    /// Chunked streams get `base + CHUNK_STRIDE * chunk_index`. 2^32 keeps
    /// purpose tags and chunk offsets from ever colliding.
    pub const CHUNK_STRIDE: u64 = 1 << 32;
}

/// An RNG for one purpose-tagged substream of `seed`.
pub fn substream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Substream for chunk `chunk_index` of a chunked purpose.
pub fn chunk_substream(seed: u64, base_stream: u64, chunk_index: usize) -> ChaCha8Rng {
    substream(
        seed,
        base_stream + stream::CHUNK_STRIDE * chunk_index as u64,
    )
}
