//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit `u64` seed. Generators are
//! ChaCha8 (`rand_chacha::ChaCha8Rng`): the seed fixes the key and
//! independent substreams are selected with the 64-bit stream id, so work
//! split across threads draws from streams indexed by item number and gives
//! identical results for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for the root stream of `seed`.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for substream `stream` of `seed`. Stream 0 is the root stream.
pub fn substream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
