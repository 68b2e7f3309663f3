use rand::{Rng as _, SeedableRng};

use super::Tensor;
use crate::Real;

/// Deterministic generator used for initialization, shuffling and dropout.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Half-width of the uniform parameter initialization.
pub const INIT_SCALE: Real = 0.08;

pub fn seeded_rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Mixes a stream index into a seed (splitmix64 finalizer) so independent
/// consumers of one run seed do not share streams.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `rows x cols` tensor with entries uniform in `[center - scale, center + scale]`.
pub fn uniform_tensor(rng: &mut Rng, rows: usize, cols: usize, center: Real, scale: Real) -> Tensor {
    let data = (0..rows * cols).map(|_| center + rng.random_range(-scale..=scale)).collect();
    Tensor::new(rows, cols, data)
}
