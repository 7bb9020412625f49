use alloc::vec::Vec;

use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu_inplace<T: Scalar>(x: &mut Tensor<T>) {
    for v in x.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Masks `dy` in place by the positive part of the activation output `y`.
pub fn relu_backward<T: Scalar>(y: &Tensor<T>, dy: &mut Tensor<T>) {
    for (g, &v) in dy.data_mut().iter_mut().zip(y.data()) {
        if v <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Inverted-dropout mask: each entry is `0` with probability `rate`, else `1/(1-rate)`.
pub fn dropout_mask<T: Scalar, R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    (0..len).map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep }).collect()
}

/// Per-pixel softmax across channels.
pub fn softmax_channels<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let (c, n) = (logits.channels(), logits.plane_len());
    let mut out = logits.clone();
    let data = out.data_mut();
    for i in 0..n {
        let mut m = data[i];
        for k in 1..c {
            m = m.max(data[k * n + i]);
        }
        let mut s = T::zero();
        for k in 0..c {
            let e = (data[k * n + i] - m).exp();
            data[k * n + i] = e;
            s = s + e;
        }
        for k in 0..c {
            data[k * n + i] = data[k * n + i] / s;
        }
    }
    out
}

/// Gradient w.r.t. logits given softmax output `p` and upstream `dp`.
pub fn softmax_backward<T: Scalar>(p: &Tensor<T>, dp: &Tensor<T>) -> Tensor<T> {
    let (c, n) = (p.channels(), p.plane_len());
    let mut dz = Tensor::zeros(c, p.height(), p.width());
    let (pd, gd) = (p.data(), dp.data());
    let zd = dz.data_mut();
    for i in 0..n {
        let mut dot = T::zero();
        for k in 0..c {
            dot = dot + pd[k * n + i] * gd[k * n + i];
        }
        for k in 0..c {
            zd[k * n + i] = pd[k * n + i] * (gd[k * n + i] - dot);
        }
    }
    dz
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = softmax_channels(&Tensor::<f64>::zeros(8, 2, 2));
        assert!(p.data().iter().all(|&v| (v - 0.125).abs() < 1e-15));
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = Tensor::from_vec(4, 1, 3, (0..12).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let dp = Tensor::from_vec(4, 1, 3, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let f = |z: &Tensor<f64>| -> f64 { softmax_channels(z).data().iter().zip(dp.data()).map(|(a, b)| a * b).sum() };
        let dz = softmax_backward(&softmax_channels(&z), &dp);
        for i in 0..12 {
            let mut zp = z.clone();
            zp.data_mut()[i] += 1e-6;
            let mut zm = z.clone();
            zm.data_mut()[i] -= 1e-6;
            let fd = (f(&zp) - f(&zm)) / 2e-6;
            assert!((fd - dz.data()[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn dropout_keeps_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m: Vec<f64> = dropout_mask(100_000, 0.5, &mut rng);
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        assert!((mean - 1.0).abs() < 0.02);
        assert!(m.iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
