//! Labeled random substreams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator streams of one run. Changing how one stream is
/// consumed never shifts another, so algorithms compared under the same
/// master seed see identical arrivals and channel paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    EnvChannel = 1,
    EnvArrivals = 2,
    AgentInit = 3,
    AgentExplore = 4,
    ReplaySampling = 5,
}

pub fn substream(master: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream as u64);
    rng
}
