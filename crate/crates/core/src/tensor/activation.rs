use super::Tensor4;
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;

pub fn relu<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_inplace<T: Scalar>(data: &mut [T]) {
    for v in data {
        if *v <= T::zero() {
            *v = T::zero();
        }
    }
}

/// Passes `upstream` where `input > 0`; the gradient at exactly 0 is 0.
pub fn relu_backward<T: Scalar>(input: &Tensor4<T>, upstream: &Tensor4<T>) -> Result<Tensor4<T>> {
    if input.shape() != upstream.shape() {
        return Err(shape_err("relu_backward", format!("{:?}", input.shape()), format!("{:?}", upstream.shape())));
    }
    let mut g = upstream.clone();
    relu_backward_inplace(input.data(), g.data_mut());
    Ok(g)
}

/// Zeroes `grad` wherever `activation` is not positive. Works with either the
/// pre- or post-ReLU values since both share the same sign pattern.
pub fn relu_backward_inplace<T: Scalar>(activation: &[T], grad: &mut [T]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{rand_tensor, rng};

    #[test]
    fn forward_and_subgradient_at_zero() {
        let x = Tensor4::from_vec([1, 1, 1, 3], vec![-1.0f32, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let up = Tensor4::filled([1, 1, 1, 3], 5.0f32);
        assert_eq!(relu_backward(&x, &up).unwrap().data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn matches_elementwise_oracle() {
        let mut r = rng(9);
        let x = rand_tensor::<f32>(&mut r, [2, 3, 4, 4]);
        let up = rand_tensor::<f32>(&mut r, [2, 3, 4, 4]);
        let y = relu(&x);
        let g = relu_backward(&x, &up).unwrap();
        for i in 0..x.len() {
            let xi = x.data()[i];
            assert_eq!(y.data()[i], if xi > 0.0 { xi } else { 0.0 });
            assert_eq!(g.data()[i], if xi > 0.0 { up.data()[i] } else { 0.0 });
        }
    }
}
