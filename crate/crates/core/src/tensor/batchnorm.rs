use super::Tensor4;
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// Learned scale/shift plus running statistics for per-channel batch
/// normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    /// Weight kept by the running statistics on each update.
    pub momentum: T,
    pub epsilon: T,
}

impl<T: Scalar> BatchNormParams<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: T::lit(0.9),
            epsilon: T::lit(1e-5),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// State retained by a train-mode forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub normalized: Tensor4<T>,
    pub inv_std: Vec<T>,
    pub gamma: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads<T> {
    pub input: Tensor4<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

/// Batch mean and biased variance per channel, as measured by a train-mode pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> BatchNormParams<T> {
    /// `running ← momentum·running + (1 − momentum)·batch`
    pub fn update_running(&mut self, stats: &BatchStats<T>) {
        let m = self.momentum;
        let keep = T::one() - m;
        for ch in 0..self.channels() {
            self.running_mean[ch] = m * self.running_mean[ch] + keep * stats.mean[ch];
            self.running_var[ch] = m * self.running_var[ch] + keep * stats.var[ch];
        }
    }
}

fn check_channels<T: Scalar>(input: &Tensor4<T>, params: &BatchNormParams<T>) -> Result<()> {
    if input.shape()[1] != params.channels() {
        return Err(shape_err(
            "batchnorm",
            format!("{} channels", params.channels()),
            format!("input {:?}", input.shape()),
        ));
    }
    Ok(())
}

/// Normalization by the running statistics only.
pub fn batchnorm_infer<T: Scalar>(input: &Tensor4<T>, params: &BatchNormParams<T>) -> Result<Tensor4<T>> {
    check_channels(input, params)?;
    let [n, c, h, w] = input.shape();
    let hw = h * w;
    let src = input.data();
    let mut out = Tensor4::zeros(input.shape());
    let dst = out.data_mut();
    for ch in 0..c {
        let inv = T::one() / (params.running_var[ch] + params.epsilon).sqrt();
        let scale = params.gamma[ch] * inv;
        let shift = params.beta[ch] - params.running_mean[ch] * scale;
        for s in 0..n {
            let o = (s * c + ch) * hw;
            for i in o..o + hw {
                dst[i] = src[i] * scale + shift;
            }
        }
    }
    Ok(out)
}

/// Normalization by biased batch statistics. Leaves the running statistics
/// untouched; the measured statistics are returned for the caller to fold in.
pub fn batchnorm_train<T: Scalar>(
    input: &Tensor4<T>,
    params: &BatchNormParams<T>,
) -> Result<(Tensor4<T>, BatchNormCache<T>, BatchStats<T>)> {
    check_channels(input, params)?;
    let [n, c, h, w] = input.shape();
    let hw = h * w;
    let count = n * hw;
    if count < 2 {
        return Err(Error::InvalidArgument(format!(
            "train-mode batchnorm needs at least 2 values per channel, got {count}"
        )));
    }
    let src = input.data();
    let inv_count = T::one() / T::lit(count as f64);
    let mut out = Tensor4::zeros(input.shape());
    let mut normalized = Tensor4::zeros(input.shape());
    let mut inv_std = vec![T::zero(); c];
    let mut stats = BatchStats {
        mean: vec![T::zero(); c],
        var: vec![T::zero(); c],
    };
    for ch in 0..c {
        let mut sum = T::zero();
        for s in 0..n {
            let o = (s * c + ch) * hw;
            sum += src[o..o + hw].iter().copied().sum::<T>();
        }
        let mean = sum * inv_count;
        let mut sq = T::zero();
        for s in 0..n {
            let o = (s * c + ch) * hw;
            for &v in &src[o..o + hw] {
                let d = v - mean;
                sq += d * d;
            }
        }
        let var = sq * inv_count;
        let inv = T::one() / (var + params.epsilon).sqrt();
        inv_std[ch] = inv;
        stats.mean[ch] = mean;
        stats.var[ch] = var;
        let (gamma, beta) = (params.gamma[ch], params.beta[ch]);
        for s in 0..n {
            let o = (s * c + ch) * hw;
            for i in o..o + hw {
                let xh = (src[i] - mean) * inv;
                normalized.data_mut()[i] = xh;
                out.data_mut()[i] = gamma * xh + beta;
            }
        }
    }
    let cache = BatchNormCache {
        normalized,
        inv_std,
        gamma: params.gamma.clone(),
    };
    Ok((out, cache, stats))
}

/// Per-channel normalization. Train mode uses biased batch statistics and
/// folds them into the running statistics; infer mode reads only the running
/// statistics.
pub fn batchnorm<T: Scalar>(
    input: &Tensor4<T>,
    params: &mut BatchNormParams<T>,
    mode: BnMode,
) -> Result<(Tensor4<T>, Option<BatchNormCache<T>>)> {
    match mode {
        BnMode::Infer => Ok((batchnorm_infer(input, params)?, None)),
        BnMode::Train => {
            let (out, cache, stats) = batchnorm_train(input, params)?;
            params.update_running(&stats);
            Ok((out, Some(cache)))
        }
    }
}

/// Gradients of the train-mode forward expression.
pub fn batchnorm_backward<T: Scalar>(cache: &BatchNormCache<T>, upstream: &Tensor4<T>) -> Result<BatchNormGrads<T>> {
    let shape = cache.normalized.shape();
    if upstream.shape() != shape {
        return Err(shape_err("batchnorm_backward", format!("{shape:?}"), format!("{:?}", upstream.shape())));
    }
    let [n, c, h, w] = shape;
    let hw = h * w;
    let count = T::lit((n * hw) as f64);
    let xh = cache.normalized.data();
    let up = upstream.data();
    let mut grad_in = Tensor4::zeros(shape);
    let mut grad_gamma = vec![T::zero(); c];
    let mut grad_beta = vec![T::zero(); c];
    for ch in 0..c {
        let (mut sum_dy, mut sum_dy_xh) = (T::zero(), T::zero());
        for s in 0..n {
            let o = (s * c + ch) * hw;
            for i in o..o + hw {
                sum_dy += up[i];
                sum_dy_xh += up[i] * xh[i];
            }
        }
        grad_beta[ch] = sum_dy;
        grad_gamma[ch] = sum_dy_xh;
        let k = cache.gamma[ch] * cache.inv_std[ch] / count;
        let dst = grad_in.data_mut();
        for s in 0..n {
            let o = (s * c + ch) * hw;
            for i in o..o + hw {
                dst[i] = k * (count * up[i] - sum_dy - xh[i] * sum_dy_xh);
            }
        }
    }
    Ok(BatchNormGrads {
        input: grad_in,
        gamma: grad_gamma,
        beta: grad_beta,
    })
}
