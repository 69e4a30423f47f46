//! Deterministic random substreams.
//!
//! Every consumer of randomness asks for a stream by `(base seed, label)`.
//! The generator is ChaCha8, a counter-based cipher, keyed by the base seed;
//! the label selects the 64-bit stream id through FNV-1a. Streams are
//! therefore independent of the order in which they are created.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Returns the stream for `label` under `seed`.
pub fn substream(seed: u64, label: &str) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(label));
    rng
}
