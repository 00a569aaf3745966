//! Synthesizes copy-move and inpainting forgeries with ground-truth masks,
//! trains a small convolutional forgery classifier written from scratch, and
//! explains its decisions with Grad-CAM heatmaps scored against the masks.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the `f32` instantiation used for training and inference.

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod gradcam;
pub mod raster;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod tensor;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor4<f32>;
