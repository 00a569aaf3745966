//! RMSProp: each step divides the gradient by the root of an exponentially
//! decayed mean of its squares.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            rho: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// Squared-gradient accumulator for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsPropState<T> {
    pub accumulator: Vec<T>,
    pub rho: T,
    pub learning_rate: T,
    pub epsilon: T,
}

impl<T: Scalar> RmsPropState<T> {
    pub fn new(len: usize, config: &RmsPropConfig) -> Self {
        Self {
            accumulator: vec![T::zero(); len],
            rho: T::lit(config.rho),
            learning_rate: T::lit(config.learning_rate),
            epsilon: T::lit(config.epsilon),
        }
    }
}

/// `s ← ρ·s + (1−ρ)·g²; θ ← θ − lr·g / (√s + ε)`
pub fn rmsprop_step<T: Scalar>(param: &mut [T], grad: &[T], state: &mut RmsPropState<T>) -> Result<()> {
    if param.len() != grad.len() || param.len() != state.accumulator.len() {
        return Err(shape_err(
            "rmsprop_step",
            format!("{} values", param.len()),
            format!("grad {}, state {}", grad.len(), state.accumulator.len()),
        ));
    }
    let (rho, lr, eps) = (state.rho, state.learning_rate, state.epsilon);
    let keep = T::one() - rho;
    for ((p, &g), s) in param.iter_mut().zip(grad).zip(state.accumulator.iter_mut()) {
        *s = rho * *s + keep * g * g;
        *p -= lr * g / (s.sqrt() + eps);
    }
    Ok(())
}

/// One [`RmsPropState`] per parameter tensor, in model parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp<T> {
    pub config: RmsPropConfig,
    pub states: Vec<RmsPropState<T>>,
}

impl<T: Scalar> RmsProp<T> {
    pub fn new(config: RmsPropConfig, param_lens: impl IntoIterator<Item = usize>) -> Self {
        Self {
            config,
            states: param_lens.into_iter().map(|l| RmsPropState::new(l, &config)).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [T]>, grads: Vec<&[T]>) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != self.states.len() {
            return Err(shape_err(
                "RmsProp::step",
                format!("{} tensors", self.states.len()),
                format!("{} params, {} grads", params.len(), grads.len()),
            ));
        }
        for ((p, g), s) in params.into_iter().zip(grads).zip(self.states.iter_mut()) {
            rmsprop_step(p, g, s)?;
        }
        Ok(())
    }
}
