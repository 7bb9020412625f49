use alloc::vec;

use rand::Rng;

use super::Param;
use crate::scalar::{gemm, MatRef, Scalar};
use crate::tensor::Tensor;

/// Upper bound on im2col buffer elements; large images are processed in row tiles.
const COL_TILE_ELEMS: usize = 1 << 20;

/// Stride-1 "same" convolution with odd square kernel and optional dilation.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
    /// `[out, in · k · k]`
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut R,
    ) -> Self {
        assert!(kernel % 2 == 1 && dilation >= 1);
        let kk = kernel * kernel;
        Self {
            in_channels,
            out_channels,
            kernel,
            dilation,
            weight: Param::glorot_uniform(
                &[out_channels, in_channels, kernel, kernel],
                in_channels * kk,
                out_channels * kk,
                rng,
            ),
            bias: Param::zeros(&[out_channels]),
        }
    }

    pub fn padding(&self) -> usize {
        self.dilation * (self.kernel - 1) / 2
    }

    fn col_rows(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn tile_rows(&self, h: usize, w: usize) -> usize {
        (COL_TILE_ELEMS / (self.col_rows() * w).max(1)).clamp(1, h)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.channels(), self.in_channels, "conv input channels");
        let (h, w) = (x.height(), x.width());
        let hw = h * w;
        let mut out = Tensor::zeros(self.out_channels, h, w);
        for co in 0..self.out_channels {
            out.plane_mut(co).fill(self.bias.value[co]);
        }
        let kdim = self.col_rows();
        let wmat = MatRef::dense(&self.weight.value, self.out_channels, kdim);
        if self.kernel == 1 {
            gemm(T::one(), wmat, MatRef::dense(x.data(), kdim, hw), T::one(), out.data_mut(), hw, 1);
            return out;
        }
        let rows = self.tile_rows(h, w);
        let mut col = vec![T::zero(); kdim * rows * w];
        let mut r0 = 0;
        while r0 < h {
            let r1 = (r0 + rows).min(h);
            let n = (r1 - r0) * w;
            self.im2col(x, r0, r1, &mut col[..kdim * n]);
            gemm(
                T::one(),
                wmat,
                MatRef::dense(&col[..kdim * n], kdim, n),
                T::one(),
                &mut out.data_mut()[r0 * w..],
                hw,
                1,
            );
            r0 = r1;
        }
        out
    }

    /// Accumulates parameter gradients; returns the input gradient if requested.
    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        assert_eq!(dy.channels(), self.out_channels);
        let (h, w) = (x.height(), x.width());
        let hw = h * w;
        for co in 0..self.out_channels {
            let s = dy.plane(co).iter().fold(T::zero(), |a, &b| a + b);
            self.bias.grad[co] = self.bias.grad[co] + s;
        }
        let kdim = self.col_rows();
        if self.kernel == 1 {
            gemm(
                T::one(),
                MatRef::dense(dy.data(), self.out_channels, hw),
                MatRef::dense(x.data(), kdim, hw).t(),
                T::one(),
                &mut self.weight.grad,
                kdim,
                1,
            );
            return need_dx.then(|| {
                let mut dx = Tensor::zeros(self.in_channels, h, w);
                gemm(
                    T::one(),
                    MatRef::dense(&self.weight.value, self.out_channels, kdim).t(),
                    MatRef::dense(dy.data(), self.out_channels, hw),
                    T::zero(),
                    dx.data_mut(),
                    hw,
                    1,
                );
                dx
            });
        }
        let mut dx = need_dx.then(|| Tensor::zeros(self.in_channels, h, w));
        let rows = self.tile_rows(h, w);
        let mut col = vec![T::zero(); kdim * rows * w];
        let mut r0 = 0;
        while r0 < h {
            let r1 = (r0 + rows).min(h);
            let n = (r1 - r0) * w;
            let dy_tile = MatRef::new(&dy.data()[r0 * w..], self.out_channels, n, hw, 1);
            self.im2col(x, r0, r1, &mut col[..kdim * n]);
            gemm(
                T::one(),
                dy_tile,
                MatRef::dense(&col[..kdim * n], kdim, n).t(),
                T::one(),
                &mut self.weight.grad,
                kdim,
                1,
            );
            if let Some(dx) = dx.as_mut() {
                gemm(
                    T::one(),
                    MatRef::dense(&self.weight.value, self.out_channels, kdim).t(),
                    dy_tile,
                    T::zero(),
                    &mut col[..kdim * n],
                    n,
                    1,
                );
                self.col2im(&col[..kdim * n], r0, r1, dx);
            }
            r0 = r1;
        }
        dx
    }

    /// Visits `(col_row, output_row, source_row, column_shift)` for every tap.
    fn for_each_tap(&self, h: usize, r0: usize, r1: usize, mut f: impl FnMut(usize, usize, Option<usize>, isize)) {
        let (k, d, pad) = (self.kernel, self.dilation as isize, self.padding() as isize);
        for ci in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let p = (ci * k + ky) * k + kx;
                    let dy = ky as isize * d - pad;
                    let dx = kx as isize * d - pad;
                    for r in r0..r1 {
                        let sy = r as isize + dy;
                        let src = (sy >= 0 && sy < h as isize).then(|| ci * h + sy as usize);
                        f(p, r - r0, src, dx);
                    }
                }
            }
        }
    }

    fn im2col(&self, x: &Tensor<T>, r0: usize, r1: usize, col: &mut [T]) {
        let (h, w) = (x.height(), x.width());
        let n = (r1 - r0) * w;
        let data = x.data();
        self.for_each_tap(h, r0, r1, |p, local_r, src, shift| {
            let dst = &mut col[p * n + local_r * w..][..w];
            match src {
                None => dst.fill(T::zero()),
                Some(src_row) => {
                    let src = &data[src_row * w..][..w];
                    let (lo, hi) = valid_range(w, shift);
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    if lo < hi {
                        let s0 = (lo as isize + shift) as usize;
                        dst[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                    }
                }
            }
        });
    }

    fn col2im(&self, col: &[T], r0: usize, r1: usize, dx: &mut Tensor<T>) {
        let (h, w) = (dx.height(), dx.width());
        let n = (r1 - r0) * w;
        let data = dx.data_mut();
        self.for_each_tap(h, r0, r1, |p, local_r, src, shift| {
            if let Some(src_row) = src {
                let from = &col[p * n + local_r * w..][..w];
                let (lo, hi) = valid_range(w, shift);
                if lo < hi {
                    let s0 = (lo as isize + shift) as usize;
                    let to = &mut data[src_row * w + s0..][..hi - lo];
                    for (t, &f) in to.iter_mut().zip(&from[lo..hi]) {
                        *t = *t + f;
                    }
                }
            }
        });
    }
}

/// Output columns `[lo, hi)` whose source column `c + shift` is inside `[0, w)`.
fn valid_range(w: usize, shift: isize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (w as isize - shift).clamp(0, w as isize) as usize;
    (lo.min(w), hi.max(lo.min(w)))
}
