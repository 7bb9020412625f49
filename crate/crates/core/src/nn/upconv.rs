use alloc::vec;

use rand::Rng;

use super::Param;
use crate::scalar::{gemm, MatRef, Scalar};
use crate::tensor::Tensor;

/// 2×2 transposed convolution with stride 2 (exact 2× upsampling).
#[derive(Clone, Debug, PartialEq)]
pub struct UpConv2x2<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out · 4, in]`; row `co·4 + dy·2 + dx` maps to output offset `(dy, dx)`.
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> UpConv2x2<T> {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, rng: &mut R) -> Self {
        Self {
            in_channels,
            out_channels,
            weight: Param::glorot_uniform(&[out_channels, 2, 2, in_channels], in_channels * 4, out_channels * 4, rng),
            bias: Param::zeros(&[out_channels]),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.channels(), self.in_channels, "up-conv input channels");
        let (h, w) = (x.height(), x.width());
        let hw = h * w;
        let rows = self.out_channels * 4;
        let mut y4 = vec![T::zero(); rows * hw];
        gemm(
            T::one(),
            MatRef::dense(&self.weight.value, rows, self.in_channels),
            MatRef::dense(x.data(), self.in_channels, hw),
            T::zero(),
            &mut y4,
            hw,
            1,
        );
        let mut out = Tensor::zeros(self.out_channels, 2 * h, 2 * w);
        for co in 0..self.out_channels {
            let b = self.bias.value[co];
            for (q, plane) in y4[co * 4 * hw..(co + 1) * 4 * hw].chunks_exact(hw).enumerate() {
                let (oy, ox) = (q / 2, q % 2);
                for i in 0..h {
                    for j in 0..w {
                        out.set(co, 2 * i + oy, 2 * j + ox, plane[i * w + j] + b);
                    }
                }
            }
        }
        out
    }

    pub fn backward(&mut self, x: &Tensor<T>, dout: &Tensor<T>) -> Tensor<T> {
        let (h, w) = (x.height(), x.width());
        let hw = h * w;
        let rows = self.out_channels * 4;
        let mut dy4 = vec![T::zero(); rows * hw];
        for co in 0..self.out_channels {
            let s = dout.plane(co).iter().fold(T::zero(), |a, &b| a + b);
            self.bias.grad[co] = self.bias.grad[co] + s;
            for (q, plane) in dy4[co * 4 * hw..(co + 1) * 4 * hw].chunks_exact_mut(hw).enumerate() {
                let (oy, ox) = (q / 2, q % 2);
                for i in 0..h {
                    for j in 0..w {
                        plane[i * w + j] = dout.at(co, 2 * i + oy, 2 * j + ox);
                    }
                }
            }
        }
        gemm(
            T::one(),
            MatRef::dense(&dy4, rows, hw),
            MatRef::dense(x.data(), self.in_channels, hw).t(),
            T::one(),
            &mut self.weight.grad,
            self.in_channels,
            1,
        );
        let mut dx = Tensor::zeros(self.in_channels, h, w);
        gemm(
            T::one(),
            MatRef::dense(&self.weight.value, rows, self.in_channels).t(),
            MatRef::dense(&dy4, rows, hw),
            T::zero(),
            dx.data_mut(),
            hw,
            1,
        );
        dx
    }
}
