//! Seeded random streams. Every consumer draws from its own ChaCha stream so
//! that, e.g., changing the initial-value distribution never shifts placement.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Placement = 1,
    InitialValues = 2,
    Clock = 3,
    Kernel = 4,
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
