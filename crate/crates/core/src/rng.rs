//! Seed streams.
//!
//! Every random decision in a run flows from one root seed. Each consumer
//! gets its own ChaCha stream so that, for example, changing the number of
//! initialization draws never perturbs the data split.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams derived from a root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 0,
    Split = 1,
    Init = 2,
    Batch = 3,
    Anchor = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
