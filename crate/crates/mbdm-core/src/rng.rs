//! Deterministic RNG streams.
//!
//! All stochastic code takes an explicit generator; independent units of
//! work (sampling chains, dataset items) get their own stream derived from
//! `(seed, stream index)` so results do not depend on scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::real::Real;
use crate::tensor::Tensor;

/// Generator for stream `stream` of the family identified by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Tensor with i.i.d. standard-normal entries.
pub fn normal_tensor<T: Real>(shape: &[usize], rng: &mut impl rand::Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::std_normal(rng)).collect();
    Tensor::from_vec(shape, data).expect("shape/data agree by construction")
}
