//! Independent random streams derived from one episode seed.
//!
//! Each consumer owns a separate ChaCha stream of the same key, so adding
//! draws in one (e.g. a different controller changing the trajectory) never
//! shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Layout,
    Wind,
    Sensor,
    /// Turbulence and gusts of fan `k`.
    Fan(usize),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Layout => 1,
            Stream::Wind => 2,
            Stream::Sensor => 3,
            Stream::Fan(k) => 16 + k as u64,
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
