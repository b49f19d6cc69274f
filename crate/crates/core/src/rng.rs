//! Seeded random streams, one independent substream per purpose and replicate,
//! so toggling one ingredient (say noise) never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Factors = 1,
    Rotation = 2,
    Weights = 3,
    Noise = 4,
    Design = 5,
    Init = 6,
}

/// Stream id for `(purpose, replicate)`.
pub fn stream_id(purpose: Purpose, replicate: u64) -> u64 {
    ((purpose as u64) << 32) | (replicate & 0xffff_ffff)
}

pub fn substream(seed: u64, purpose: Purpose, replicate: u64) -> ChaCha8Rng {
    from_stream(seed, stream_id(purpose, replicate))
}

pub fn from_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
