use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::scalar::Scalar;

/// A trainable tensor together with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
    pub shape: Vec<usize>,
}

impl<T: Scalar> Param<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { value: vec![T::zero(); n], grad: vec![T::zero(); n], shape: shape.to_vec() }
    }

    /// Glorot/Xavier uniform: `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = num_traits::Float::sqrt(6.0 / (fan_in + fan_out) as f64);
        let mut p = Self::zeros(shape);
        for v in &mut p.value {
            *v = T::of(rng.random_range(-bound..bound));
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}
