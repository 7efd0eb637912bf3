//! Counter-based random substreams.
//!
//! Every stochastic routine derives its generators from `(seed, purpose,
//! index)`, so a trial's randomness never depends on which worker ran it or
//! in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Distinguishes independent uses of one user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Signs = 1,
    Starts = 2,
    Picks = 3,
    Points = 4,
    Gaussian = 5,
    Instance = 6,
    Retry = 7,
    Subset = 8,
}

/// Generator for substream `index` of `(seed, purpose)`.
pub fn substream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    // splitmix64 finalizer decorrelates nearby (seed, purpose) pairs
    let mut z = seed ^ (purpose as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let mut rng = ChaCha8Rng::seed_from_u64(z);
    rng.set_stream(index);
    rng
}

/// Child seed for a nested routine that takes its own `seed` argument.
pub fn child_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    use rand::Rng;
    substream(seed, purpose, index).random()
}
