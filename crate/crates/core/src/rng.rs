//! Seeded generator streams.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Generator used by every stochastic routine.
pub type Rng = ChaCha20Rng;

/// Generator for `seed` on stream `stream`. Distinct streams never overlap.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
