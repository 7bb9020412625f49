use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Param;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adaptive-moment optimizer with bias correction and a fixed learning rate.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub learning_rate: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(learning_rate: f64, config: AdamConfig) -> Self {
        Self { config, learning_rate, step: 0, m: Vec::new(), v: Vec::new() }
    }

    /// Applies one update from the accumulated gradients scaled by `grad_scale`.
    /// Parameters must be presented in the same order on every call.
    pub fn step(&mut self, params: &mut [&mut Param<T>], grad_scale: T) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter list changed between steps");
        self.step += 1;
        let (b1, b2) = (self.config.beta1, self.config.beta2);
        let bc1 = 1.0 - num_traits::Float::powi(b1, self.step as i32);
        let bc2 = 1.0 - num_traits::Float::powi(b2, self.step as i32);
        let lr = T::of(self.learning_rate * num_traits::Float::sqrt(bc2) / bc1);
        let eps = T::of(self.config.epsilon * num_traits::Float::sqrt(bc2));
        let (b1, b2) = (T::of(b1), T::of(b2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i] * grad_scale;
                m[i] = b1 * m[i] + one_b1 * g;
                v[i] = b2 * v[i] + one_b2 * g * g;
                p.value[i] = p.value[i] - lr * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}
