use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    crate::rng::seeded(seed)
}

/// Values uniform in [−1, 1].
pub fn rand_vec<T: Scalar>(r: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    (0..n).map(|_| T::lit(r.random_range(-1.0..1.0))).collect()
}

pub fn rand_tensor<T: Scalar>(r: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor4<T> {
    Tensor4::from_vec(shape, rand_vec(r, shape.iter().product())).unwrap()
}
