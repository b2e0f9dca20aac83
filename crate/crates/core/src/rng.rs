//! Seeded random streams.
//!
//! Every random quantity in a run is drawn from ChaCha8 keyed by the run
//! seed. Independent purposes use disjoint stream ids: the purpose tag sits in
//! the top byte and the per-purpose index in the low 56 bits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    /// Environmental random walks, indexed by channel.
    Walk = 1,
    /// Link drop decisions, indexed by round.
    Links = 2,
    /// Sensor noise, indexed by round.
    Noise = 3,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) | (index & ((1 << 56) - 1)));
    rng
}
