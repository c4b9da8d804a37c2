//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit RNG. Independent streams for
//! parallel replications come from ChaCha's 64-bit stream selector, so a
//! replication's draws depend only on `(seed, stream)` and not on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for stream `stream` under master `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
