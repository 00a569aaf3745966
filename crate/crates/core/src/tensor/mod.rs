//! Dense NCHW tensors and the hand-written forward/backward kernels of the
//! classifier's layers.

mod activation;
mod batchnorm;
mod conv;
mod gradcheck;
mod linear;
mod loss;
mod optim;
mod pool;

pub use activation::{relu, relu_backward, relu_backward_inplace, relu_inplace};
pub use batchnorm::{
    batchnorm, batchnorm_backward, batchnorm_infer, batchnorm_train, BatchNormCache, BatchNormGrads, BatchNormParams,
    BatchStats, BnMode,
};
pub use conv::{conv2d, conv2d_backward, conv2d_backward_params, conv_output_size, ConvGrads, ConvParams};
pub use gradcheck::{gradient_check, numeric_gradient, relative_error};
pub use linear::{linear, linear_backward, LinearGrads, LinearParams, Matrix};
pub use loss::{bce_with_logit, LossValue};
pub use optim::{rmsprop_step, RmsProp, RmsPropConfig, RmsPropState};
pub use pool::{maxpool2, maxpool2_backward, PoolIndices};

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;

/// 4-D array laid out as (batch, channel, height, width), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: [usize; 4], value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(shape_err(
                "Tensor4::from_vec",
                format!("{expected} values for shape {shape:?}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let [n, c, h, w] = shape;
        let mut data = Vec::with_capacity(n * c * h * w);
        for a in 0..n {
            for b in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f([a, b, y, x]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, idx: [usize; 4]) -> usize {
        let [_, c, h, w] = self.shape;
        ((idx[0] * c + idx[1]) * h + idx[2]) * w + idx[3]
    }

    #[inline]
    pub fn get(&self, idx: [usize; 4]) -> T {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 4], v: T) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// Number of values in one sample.
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn sample(&self, i: usize) -> &[T] {
        let l = self.sample_len();
        &self.data[i * l..(i + 1) * l]
    }

    /// Copy of sample `i` as a batch of one.
    pub fn sample_tensor(&self, i: usize) -> Self {
        let [_, c, h, w] = self.shape;
        Self {
            shape: [1, c, h, w],
            data: self.sample(i).to_vec(),
        }
    }

    /// Stacks batches along the first axis.
    pub fn concat(parts: &[Self]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(crate::Error::InvalidArgument("concat of zero tensors".into()));
        };
        let [_, c, h, w] = first.shape;
        let mut n = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.shape[1..] != first.shape[1..] {
                return Err(shape_err("Tensor4::concat", format!("(_, {c}, {h}, {w})"), format!("{:?}", p.shape)));
            }
            n += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        Ok(Self { shape: [n, c, h, w], data })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Elementwise product summed: `sum(self ⊙ other)`.
    pub fn dot(&self, other: &Self) -> T {
        crate::scalar::dot(&self.data, &other.data)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts every value to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}
