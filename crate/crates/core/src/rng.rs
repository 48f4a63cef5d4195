//! Deterministic random streams.
//!
//! Every sampling phase draws from its own ChaCha8 key, derived from the
//! master seed and a phase tag. Within a phase, work is cut into fixed-size
//! chunks and chunk `c` uses ChaCha stream `c`, so results do not depend on
//! how many worker threads process the chunks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Number of samples produced from one chunk stream.
pub const CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey {
    seed: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        StreamKey { seed: master_seed }
    }

    /// Independent key for a sub-phase.
    pub fn derive(self, tag: u64) -> Self {
        StreamKey { seed: splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D))) }
    }

    pub fn rng(self) -> SimRng {
        SimRng::seed_from_u64(self.seed)
    }

    /// Generator for chunk `chunk` of this phase.
    pub fn chunk_rng(self, chunk: u64) -> SimRng {
        let mut rng = self.rng();
        rng.set_stream(chunk);
        rng
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splits `total` items into `(chunk index, chunk length)` pairs of at most
/// [`CHUNK`] items.
pub fn chunks(total: usize) -> impl Iterator<Item = (u64, usize)> + Clone {
    (0..total.div_ceil(CHUNK)).map(move |c| (c as u64, CHUNK.min(total - c * CHUNK)))
}
