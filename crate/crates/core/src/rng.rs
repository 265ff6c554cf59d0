//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a stream addressed by
//! `(seed, model_id, replica_id, stage)`. Streams are derived statelessly, so
//! the value a given patch sees never depends on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Which consumer a stream feeds. Distinct stages never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stage {
    Model = 1,
    Confounders = 2,
    Texture = 3,
    Degradation = 4,
    Noise = 5,
    Augment = 6,
    Init = 7,
    Shuffle = 8,
    Sweep = 9,
}

/// Replica slot used for streams that belong to a model rather than a replica.
pub const MODEL_LEVEL: u64 = u64::MAX;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Opens the stream for one `(seed, model_id, replica_id, stage)` cell.
pub fn stream(seed: u64, model_id: u64, replica_id: u64, stage: Stage) -> StreamRng {
    let w0 = splitmix64(seed);
    let w1 = splitmix64(w0 ^ model_id);
    let w2 = splitmix64(w1 ^ replica_id);
    let w3 = splitmix64(w2 ^ (stage as u64));
    let mut key = [0u8; 32];
    for (chunk, w) in key.chunks_exact_mut(8).zip([w0, w1, w2, w3]) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
