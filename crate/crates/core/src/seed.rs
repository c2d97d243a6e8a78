//! All randomness derives from one user-supplied `u64` seed.
//!
//! Each consumer gets its own ChaCha8 stream, selected by
//! `stream = (purpose << 32) | index`, so k-means restart `r` or CV fold
//! shuffle `f` can be reproduced in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Purpose {
    KMeansRestart = 1,
    FoldAssignment = 2,
    Synthetic = 3,
}

pub fn stream_rng(seed: u64, purpose: Purpose, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | index as u64);
    rng
}
