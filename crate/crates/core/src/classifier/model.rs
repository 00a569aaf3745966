use rand::Rng;

use super::arch::ArchConfig;
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{
    batchnorm_backward, batchnorm_infer, batchnorm_train, conv2d, conv2d_backward, conv2d_backward_params, linear,
    linear_backward, maxpool2, maxpool2_backward, relu_backward_inplace, relu_inplace, BatchNormCache,
    BatchNormParams, BatchStats, BnMode, ConvParams, LinearParams, Matrix, PoolIndices, Tensor4,
};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock<T> {
    pub conv: ConvParams<T>,
    pub bn: BatchNormParams<T>,
}

/// The forgery classifier: conv blocks, then fc → ReLU → fc to one logit.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub arch: ArchConfig,
    pub blocks: Vec<ConvBlock<T>>,
    pub fc1: LinearParams<T>,
    pub fc2: LinearParams<T>,
}

#[derive(Clone, Debug)]
pub struct BlockCache<T> {
    pub input: Tensor4<T>,
    pub bn: Option<BatchNormCache<T>>,
    /// Post-ReLU, pre-pool activation.
    pub activation: Tensor4<T>,
    pub pool: PoolIndices,
}

/// Everything a forward pass keeps for backpropagation and Grad-CAM.
#[derive(Clone, Debug)]
pub struct ActivationCache<T> {
    pub mode: BnMode,
    pub blocks: Vec<BlockCache<T>>,
    pub flat: Matrix<T>,
    /// Post-ReLU hidden layer.
    pub hidden: Matrix<T>,
    pub logits: Vec<T>,
    batch_stats: Vec<BatchStats<T>>,
}

impl<T> ActivationCache<T> {
    /// Feature maps of the final conv block after ReLU, before pooling.
    pub fn final_features(&self) -> &Tensor4<T> {
        &self.blocks.last().expect("model has at least one block").activation
    }
}

/// The nondifferentiable choices of one forward pass: which units each
/// ReLU let through and which input won each pooling window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gates {
    pub relu: Vec<Vec<bool>>,
    pub pool: Vec<PoolIndices>,
    pub hidden: Vec<bool>,
}

impl<T: Scalar> ActivationCache<T> {
    pub fn gates(&self) -> Gates {
        Gates {
            relu: self.blocks.iter().map(|b| b.activation.data().iter().map(|&v| v > T::zero()).collect()).collect(),
            pool: self.blocks.iter().map(|b| b.pool.clone()).collect(),
            hidden: self.hidden.data.iter().map(|&v| v > T::zero()).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BlockGrads<T> {
    pub conv_weights: Tensor4<T>,
    pub conv_bias: Vec<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

/// Parameter gradients in model parameter order, plus the input gradient.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub blocks: Vec<BlockGrads<T>>,
    pub fc1_weights: Matrix<T>,
    pub fc1_bias: Vec<T>,
    pub fc2_weights: Matrix<T>,
    pub fc2_bias: Vec<T>,
    pub input: Option<Tensor4<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for b in &self.blocks {
            out.extend([b.conv_weights.data(), &b.conv_bias[..], &b.gamma[..], &b.beta[..]]);
        }
        out.extend([&self.fc1_weights.data[..], &self.fc1_bias[..], &self.fc2_weights.data[..], &self.fc2_bias[..]]);
        out
    }
}

struct HeadGrads<T> {
    fc1_weights: Matrix<T>,
    fc1_bias: Vec<T>,
    fc2_weights: Matrix<T>,
    fc2_bias: Vec<T>,
    /// Gradient w.r.t. the final block's pre-pool activation.
    features: Tensor4<T>,
}

fn glorot<T: Scalar, R: Rng>(rng: &mut R, n: usize, fan_in: usize, fan_out: usize) -> Vec<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| T::lit(rng.random_range(-a..a))).collect()
}

impl<T: Scalar> Model<T> {
    /// Glorot-uniform conv and fc weights, zero biases, unit gamma, zero
    /// beta. Deterministic in `seed`.
    pub fn init(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.check_geometry()?;
        let mut rng = crate::rng::seeded(seed);
        let mut blocks = Vec::with_capacity(arch.channels.len());
        let mut in_c = arch.in_channels;
        for &out_c in &arch.channels {
            let w = glorot(&mut rng, out_c * in_c * 9, in_c * 9, out_c * 9);
            blocks.push(ConvBlock {
                conv: ConvParams {
                    weights: Tensor4::from_vec([out_c, in_c, 3, 3], w)?,
                    bias: vec![T::zero(); out_c],
                    stride: 1,
                    padding: 1,
                },
                bn: BatchNormParams::new(out_c),
            });
            in_c = out_c;
        }
        let (d, hdim) = (arch.flat_dim(), arch.fc_hidden);
        let fc1 = LinearParams {
            weights: Matrix::from_vec(d, hdim, glorot(&mut rng, d * hdim, d, hdim))?,
            bias: vec![T::zero(); hdim],
        };
        let fc2 = LinearParams {
            weights: Matrix::from_vec(hdim, 1, glorot(&mut rng, hdim, hdim, 1))?,
            bias: vec![T::zero(); 1],
        };
        Ok(Self {
            arch: arch.clone(),
            blocks,
            fc1,
            fc2,
        })
    }

    fn check_input(&self, input: &Tensor4<T>) -> Result<()> {
        let [n, c, h, w] = input.shape();
        let s = self.arch.input_size;
        if n == 0 || c != self.arch.in_channels || h != s || w != s {
            return Err(shape_err(
                "Model::forward",
                format!("(n ≥ 1, {}, {s}, {s})", self.arch.in_channels),
                format!("{:?}", input.shape()),
            ));
        }
        Ok(())
    }

    /// Forward pass. Train mode normalizes with batch statistics and folds
    /// them into the running statistics.
    pub fn forward(&mut self, input: &Tensor4<T>, mode: BnMode) -> Result<ActivationCache<T>> {
        let cache = self.forward_cached(input, mode)?;
        if mode == BnMode::Train {
            for (block, stats) in self.blocks.iter_mut().zip(&cache.batch_stats) {
                block.bn.update_running(stats);
            }
        }
        Ok(cache)
    }

    /// Forward pass that never touches the running statistics. In train
    /// mode the measured batch statistics stay in the cache.
    pub fn forward_cached(&self, input: &Tensor4<T>, mode: BnMode) -> Result<ActivationCache<T>> {
        self.check_input(input)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut batch_stats = Vec::new();
        let mut x = input.clone();
        for block in &self.blocks {
            let conv_out = conv2d(&x, &block.conv)?;
            let (mut act, bn) = match mode {
                BnMode::Train => {
                    let (out, cache, stats) = batchnorm_train(&conv_out, &block.bn)?;
                    batch_stats.push(stats);
                    (out, Some(cache))
                }
                BnMode::Infer => (batchnorm_infer(&conv_out, &block.bn)?, None),
            };
            relu_inplace(act.data_mut());
            let (pooled, pool) = maxpool2(&act)?;
            blocks.push(BlockCache {
                input: x,
                bn,
                activation: act,
                pool,
            });
            x = pooled;
        }
        let n = x.shape()[0];
        let d = x.sample_len();
        let flat = Matrix::from_vec(n, d, x.into_vec())?;
        let mut hidden = linear(&flat, &self.fc1)?;
        relu_inplace(&mut hidden.data);
        let logits = linear(&hidden, &self.fc2)?.data;
        Ok(ActivationCache {
            mode,
            blocks,
            flat,
            hidden,
            logits,
            batch_stats,
        })
    }

    /// Inference-mode logits.
    pub fn predict(&self, input: &Tensor4<T>) -> Result<Vec<T>> {
        Ok(self.forward_cached(input, BnMode::Infer)?.logits)
    }

    /// Logits computed from given final-block features (post-ReLU, pre-pool),
    /// i.e. the part of the network above the Grad-CAM tap point.
    pub fn logits_from_features(&self, features: &Tensor4<T>) -> Result<Vec<T>> {
        let (pooled, _) = maxpool2(features)?;
        let n = pooled.shape()[0];
        let d = pooled.sample_len();
        let flat = Matrix::from_vec(n, d, pooled.into_vec())?;
        let mut hidden = linear(&flat, &self.fc1)?;
        relu_inplace(&mut hidden.data);
        Ok(linear(&hidden, &self.fc2)?.data)
    }

    /// Train-mode logits with every ReLU gate and pooling winner pinned to
    /// `gates`. Agrees with [`Model::forward_cached`] wherever the gates do
    /// not change and has the same gradient almost everywhere, which makes it
    /// the reference function for finite-difference checks across kinks.
    pub fn forward_gated(&self, input: &Tensor4<T>, gates: &Gates) -> Result<Vec<T>> {
        self.check_input(input)?;
        if gates.relu.len() != self.blocks.len() || gates.pool.len() != self.blocks.len() {
            return Err(Error::InvalidArgument("gates do not match the model's block count".into()));
        }
        let mut x = input.clone();
        for ((block, relu), pool) in self.blocks.iter().zip(&gates.relu).zip(&gates.pool) {
            let conv_out = conv2d(&x, &block.conv)?;
            let (mut act, _, _) = batchnorm_train(&conv_out, &block.bn)?;
            if relu.len() != act.len() || pool.input_shape != act.shape() {
                return Err(shape_err("Model::forward_gated", format!("{:?}", act.shape()), format!("{:?}", pool.input_shape)));
            }
            for (v, &open) in act.data_mut().iter_mut().zip(relu) {
                if !open {
                    *v = T::zero();
                }
            }
            let [n, c, h, w] = act.shape();
            let pooled: Vec<T> = pool.argmax.iter().map(|&i| act.data()[i]).collect();
            x = Tensor4::from_vec([n, c, h / 2, w / 2], pooled)?;
        }
        let n = x.shape()[0];
        let d = x.sample_len();
        let flat = Matrix::from_vec(n, d, x.into_vec())?;
        let mut hidden = linear(&flat, &self.fc1)?;
        for (v, &open) in hidden.data.iter_mut().zip(&gates.hidden) {
            if !open {
                *v = T::zero();
            }
        }
        Ok(linear(&hidden, &self.fc2)?.data)
    }

    fn head_backward(&self, cache: &ActivationCache<T>, dlogits: &[T]) -> Result<HeadGrads<T>> {
        let n = cache.logits.len();
        if dlogits.len() != n {
            return Err(shape_err("Model::backward", format!("{n} logit gradients"), format!("{}", dlogits.len())));
        }
        let up = Matrix::from_vec(n, 1, dlogits.to_vec())?;
        let g2 = linear_backward(&cache.hidden, &self.fc2, &up)?;
        let mut gh = g2.input;
        relu_backward_inplace(&cache.hidden.data, &mut gh.data);
        let g1 = linear_backward(&cache.flat, &self.fc1, &gh)?;
        let last = cache.blocks.last().expect("model has at least one block");
        let [_, c, h, w] = last.activation.shape();
        let pooled_grad = Tensor4::from_vec([n, c, h / 2, w / 2], g1.input.data)?;
        let features = maxpool2_backward(&last.pool, &pooled_grad)?;
        Ok(HeadGrads {
            fc1_weights: g1.weights,
            fc1_bias: g1.bias,
            fc2_weights: g2.weights,
            fc2_bias: g2.bias,
            features,
        })
    }

    /// Gradient of `Σ dlogits_i · logit_i` with respect to the final
    /// block's post-ReLU feature maps. Valid for caches of either mode.
    pub fn feature_gradient(&self, cache: &ActivationCache<T>, dlogits: &[T]) -> Result<Tensor4<T>> {
        Ok(self.head_backward(cache, dlogits)?.features)
    }

    /// Full backward pass from logit gradients. Needs a train-mode cache.
    pub fn backward(&self, cache: &ActivationCache<T>, dlogits: &[T], want_input: bool) -> Result<Gradients<T>> {
        if cache.mode != BnMode::Train {
            return Err(Error::InvalidArgument("backward needs a train-mode activation cache".into()));
        }
        let head = self.head_backward(cache, dlogits)?;
        let mut grad = head.features;
        let mut block_grads = Vec::with_capacity(self.blocks.len());
        let mut input_grad = None;
        for (i, (block, bc)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            if i + 1 < self.blocks.len() {
                grad = maxpool2_backward(&bc.pool, &grad)?;
            }
            relu_backward_inplace(bc.activation.data(), grad.data_mut());
            let bn_cache = bc.bn.as_ref().expect("train-mode cache holds batchnorm state");
            let bn = batchnorm_backward(bn_cache, &grad)?;
            let (conv_weights, conv_bias) = if i > 0 || want_input {
                let g = conv2d_backward(&bc.input, &block.conv, &bn.input)?;
                grad = g.input;
                (g.weights, g.bias)
            } else {
                conv2d_backward_params(&bc.input, &block.conv, &bn.input)?
            };
            if i == 0 && want_input {
                input_grad = Some(grad.clone());
            }
            block_grads.push(BlockGrads {
                conv_weights,
                conv_bias,
                gamma: bn.gamma,
                beta: bn.beta,
            });
        }
        block_grads.reverse();
        Ok(Gradients {
            blocks: block_grads,
            fc1_weights: head.fc1_weights,
            fc1_bias: head.fc1_bias,
            fc2_weights: head.fc2_weights,
            fc2_bias: head.fc2_bias,
            input: input_grad,
        })
    }

    /// Learnable tensors in a fixed order shared with [`Gradients::slices`].
    pub fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for b in &self.blocks {
            out.extend([b.conv.weights.data(), &b.conv.bias[..], &b.bn.gamma[..], &b.bn.beta[..]]);
        }
        out.extend([&self.fc1.weights.data[..], &self.fc1.bias[..], &self.fc2.weights.data[..], &self.fc2.bias[..]]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for b in &mut self.blocks {
            out.push(b.conv.weights.data_mut());
            out.push(&mut b.conv.bias);
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
        }
        out.push(&mut self.fc1.weights.data);
        out.push(&mut self.fc1.bias);
        out.push(&mut self.fc2.weights.data);
        out.push(&mut self.fc2.bias);
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.blocks.len() {
            for part in ["conv.weight", "conv.bias", "bn.gamma", "bn.beta"] {
                out.push(format!("block{i}.{part}"));
            }
        }
        out.extend(["fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"].map(String::from));
        out
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            let c = b.bn.channels();
            out.push(b.conv.weights.shape().to_vec());
            out.extend([vec![c], vec![c], vec![c]]);
        }
        out.push(vec![self.fc1.weights.rows, self.fc1.weights.cols]);
        out.push(vec![self.fc1.bias.len()]);
        out.push(vec![self.fc2.weights.rows, self.fc2.weights.cols]);
        out.push(vec![self.fc2.bias.len()]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{bce_with_logit, gradient_check};
    use crate::testutil::{rand_tensor, rng};

    fn small_arch(input: usize) -> ArchConfig {
        ArchConfig {
            input_size: input,
            in_channels: 3,
            channels: vec![2, 3, 3, 4, 3],
            fc_hidden: 5,
        }
    }

    #[test]
    fn init_is_deterministic_with_spec_constants() {
        let arch = ArchConfig::standard(64);
        let a = Model::<f32>::init(&arch, 5).unwrap();
        let b = Model::<f32>::init(&arch, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, Model::<f32>::init(&arch, 6).unwrap());
        for block in &a.blocks {
            assert!(block.conv.bias.iter().all(|&v| v == 0.0));
            assert!(block.bn.gamma.iter().all(|&v| v == 1.0));
            assert!(block.bn.beta.iter().all(|&v| v == 0.0));
        }
        assert!(a.fc1.bias.iter().chain(&a.fc2.bias).all(|&v| v == 0.0));
    }

    #[test]
    fn init_means_are_consistent_with_uniform_law() {
        let arch = small_arch(32);
        let shapes = Model::<f64>::init(&arch, 0).unwrap().param_shapes();
        let names = Model::<f64>::init(&arch, 0).unwrap().param_names();
        let weights: Vec<usize> = names.iter().enumerate().filter(|(_, n)| n.ends_with("weight")).map(|(i, _)| i).collect();
        for &ti in &weights {
            let mut total = 0.0;
            let mut count = 0usize;
            let mut bound: f64 = 0.0;
            for seed in 0..100 {
                let m = Model::<f64>::init(&arch, seed).unwrap();
                let p = m.params()[ti];
                bound = bound.max(p.iter().fold(0.0, |a: f64, v| a.max(v.abs())));
                total += p.iter().sum::<f64>();
                count += p.len();
            }
            let (fan_in, fan_out) = match shapes[ti].len() {
                4 => (shapes[ti][1] * 9, shapes[ti][0] * 9),
                _ => (shapes[ti][0], shapes[ti][1]),
            };
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            assert!(bound <= a);
            let sigma = a / 3f64.sqrt() / (count as f64).sqrt();
            assert!((total / count as f64).abs() < 3.0 * sigma, "{}", names[ti]);
        }
    }

    #[test]
    fn infer_mode_is_batch_independent_and_deterministic() {
        let arch = small_arch(32);
        let m = Model::<f32>::init(&arch, 1).unwrap();
        let mut r = rng(2);
        let a = rand_tensor::<f32>(&mut r, [1, 3, 32, 32]).map(|v| v.abs());
        let b = rand_tensor::<f32>(&mut r, [1, 3, 32, 32]).map(|v| v.abs());
        let solo = m.predict(&a).unwrap();
        let pair = m.predict(&Tensor4::concat(&[a.clone(), b]).unwrap()).unwrap();
        let twin = m.predict(&Tensor4::concat(&[a.clone(), a]).unwrap()).unwrap();
        assert_eq!(solo[0], pair[0]);
        assert_eq!(twin[0], twin[1]);
    }

    #[test]
    fn forward_rejects_wrong_size() {
        let m = Model::<f32>::init(&small_arch(32), 1).unwrap();
        assert!(m.predict(&Tensor4::zeros([1, 3, 16, 16])).is_err());
        assert!(m.predict(&Tensor4::zeros([1, 1, 32, 32])).is_err());
    }

    #[test]
    fn train_forward_updates_running_stats_only_in_train_mode() {
        let mut m = Model::<f32>::init(&small_arch(32), 1).unwrap();
        let mut r = rng(3);
        let x = rand_tensor::<f32>(&mut r, [2, 3, 32, 32]);
        let before = m.clone();
        m.forward(&x, BnMode::Infer).unwrap();
        assert_eq!(m, before);
        m.forward(&x, BnMode::Train).unwrap();
        assert_ne!(m.blocks[0].bn.running_mean, before.blocks[0].bn.running_mean);
        assert!(m.blocks.iter().all(|b| b.bn.running_var.iter().all(|&v| v >= 0.0)));
    }

    #[test]
    fn backward_rejects_infer_cache() {
        let m = Model::<f32>::init(&small_arch(32), 1).unwrap();
        let cache = m.forward_cached(&Tensor4::zeros([1, 3, 32, 32]), BnMode::Infer).unwrap();
        assert!(m.backward(&cache, &[1.0], false).is_err());
    }

    fn gated_loss(m: &Model<f64>, x: &Tensor4<f64>, labels: &[f64], gates: &Gates) -> f64 {
        bce_with_logit(&m.forward_gated(x, gates).unwrap(), labels).unwrap().value
    }

    #[test]
    fn gated_forward_matches_forward_at_the_reference_point() {
        let m = Model::<f64>::init(&small_arch(32), 3).unwrap();
        let x = rand_tensor::<f64>(&mut rng(4), [2, 3, 32, 32]);
        let cache = m.forward_cached(&x, BnMode::Train).unwrap();
        assert_eq!(m.forward_gated(&x, &cache.gates()).unwrap(), cache.logits);
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let arch = small_arch(32);
        let mut m = Model::<f64>::init(&arch, 7).unwrap();
        let mut r = rng(8);
        for v in m.fc2.weights.data.iter_mut() {
            *v *= 3.0;
        }
        let x = rand_tensor::<f64>(&mut r, [2, 3, 32, 32]);
        let labels = [1.0, 0.0];
        let cache = m.forward_cached(&x, BnMode::Train).unwrap();
        let gates = cache.gates();
        let loss = bce_with_logit(&cache.logits, &labels).unwrap();
        let grads = m.backward(&cache, &loss.grad_wrt_logit, true).unwrap();

        let f_in = |v: &[f64]| gated_loss(&m, &Tensor4::from_vec(x.shape(), v.to_vec()).unwrap(), &labels, &gates);
        let err = gradient_check(f_in, x.data(), grads.input.as_ref().unwrap().data(), 1e-3).unwrap();
        assert!(err < 1e-3, "input: {err}");

        let names = m.param_names();
        let slices: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
        for (ti, analytic) in slices.iter().enumerate() {
            let base = m.params()[ti].to_vec();
            let f = |v: &[f64]| {
                let mut q = m.clone();
                q.params_mut()[ti].copy_from_slice(v);
                gated_loss(&q, &x, &labels, &gates)
            };
            let err = gradient_check(f, &base, analytic, 1e-3).unwrap();
            assert!(err < 1e-3, "{}: {err}", names[ti]);
        }
    }
}
