//! Deterministic per-trial random streams.
//!
//! Every trial draws from its own ChaCha8 stream keyed by
//! `(master_seed, stream, index)`, so results never depend on how trials are
//! scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG for trial `index` of stream `stream` (for example a depth index).
pub fn trial_rng(master_seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(master_seed ^ mix64(stream.wrapping_add(1))));
    rng.set_stream(index);
    rng
}

/// Runs `f` inside a rayon pool with `workers` threads (0 = rayon default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
