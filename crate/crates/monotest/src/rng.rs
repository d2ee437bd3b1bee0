//! Deterministic RNG stream derivation.
//!
//! Every Monte Carlo routine takes an explicit `u64` seed and derives
//! independent substreams from it. Parallel batches assign one substream per
//! fixed-size chunk and merge results in chunk order, so output is a pure
//! function of `(seed, parameters)` regardless of thread count.

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Derive a fast generator for substream `stream` of `seed`.
///
/// The 256-bit state is drawn from a ChaCha12 generator keyed by `seed` on
/// stream `stream`, which keeps substreams statistically independent while
/// the hot loops run on the cheaper xoshiro-based [`SmallRng`].
pub fn substream(seed: u64, stream: u64) -> SmallRng {
    let mut master = ChaCha12Rng::seed_from_u64(seed);
    master.set_stream(stream);
    let mut key = [0u8; 32];
    master.fill(&mut key);
    SmallRng::from_seed(key)
}

/// A ChaCha generator on substream `stream`, for code that prefers a
/// cryptographic stream (cheap setup, slower sampling).
pub fn substream_chacha(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive an independent child seed for a named sub-experiment, so that two
/// simulations inside one run never share a stream (splitmix64 step).
pub fn child_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
