use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A single-sample feature map stored channel-major (`C × H × W`).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, T::zero())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        Self { channels, height, width, data: vec![value; channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Shape(alloc::format!(
                "{} elements for a {channels}x{height}x{width} tensor",
                data.len()
            )));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Stacks feature maps along the channel axis.
    pub fn concat(parts: &[&Tensor<T>]) -> Self {
        let (h, w) = (parts[0].height, parts[0].width);
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        let mut channels = 0;
        for p in parts {
            assert!(p.height == h && p.width == w, "concat of mismatched spatial dims");
            data.extend_from_slice(&p.data);
            channels += p.channels;
        }
        Self { channels, height: h, width: w, data }
    }

    /// Inverse of [`Tensor::concat`].
    pub fn split(&self, sizes: &[usize]) -> Vec<Tensor<T>> {
        assert_eq!(sizes.iter().sum::<usize>(), self.channels);
        let n = self.plane_len();
        let mut out = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &c in sizes {
            out.push(Self {
                channels: c,
                height: self.height,
                width: self.width,
                data: self.data[start * n..(start + c) * n].to_vec(),
            });
            start += c;
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert!(self.same_shape(other));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        self.map(|v| U::of(v.as_f64()))
    }

    /// Reflect-pads on the bottom and right edges (`pad < dim` required).
    pub fn reflect_pad(&self, new_h: usize, new_w: usize) -> Self {
        assert!(new_h >= self.height && new_w >= self.width);
        assert!(new_h - self.height < self.height && new_w - self.width < self.width);
        if new_h == self.height && new_w == self.width {
            return self.clone();
        }
        let reflect = |i: usize, n: usize| if i < n { i } else { 2 * (n - 1) - i };
        let mut out = Self::zeros(self.channels, new_h, new_w);
        for c in 0..self.channels {
            for y in 0..new_h {
                let sy = reflect(y, self.height);
                for x in 0..new_w {
                    out.set(c, y, x, self.at(c, sy, reflect(x, self.width)));
                }
            }
        }
        out
    }

    /// Zero-pads on the bottom and right edges.
    pub fn zero_pad(&self, new_h: usize, new_w: usize) -> Self {
        let mut out = Self::zeros(self.channels, new_h, new_w);
        for c in 0..self.channels {
            for y in 0..self.height {
                let src = &self.data[(c * self.height + y) * self.width..][..self.width];
                out.data[(c * new_h + y) * new_w..][..self.width].copy_from_slice(src);
            }
        }
        out
    }

    /// Top-left `h × w` window.
    pub fn crop(&self, h: usize, w: usize) -> Self {
        assert!(h <= self.height && w <= self.width);
        if h == self.height && w == self.width {
            return self.clone();
        }
        let mut out = Self::zeros(self.channels, h, w);
        for c in 0..self.channels {
            for y in 0..h {
                let src = &self.data[(c * self.height + y) * self.width..][..w];
                out.data[(c * h + y) * w..][..w].copy_from_slice(src);
            }
        }
        out
    }

    /// Index of the largest channel at every pixel.
    pub fn argmax_channels(&self) -> Vec<u8> {
        let n = self.plane_len();
        (0..n)
            .map(|i| {
                let mut best = 0;
                let mut best_v = self.data[i];
                for c in 1..self.channels {
                    let v = self.data[c * n + i];
                    if v > best_v {
                        best_v = v;
                        best = c;
                    }
                }
                best as u8
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_split_inverse() {
        let a = Tensor::<f32>::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::<f32>::filled(2, 2, 2, 7.0);
        let c = Tensor::concat(&[&a, &b]);
        assert_eq!(c.channels(), 3);
        let parts = c.split(&[1, 2]);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn reflect_pad_then_crop() {
        let t = Tensor::<f32>::from_vec(1, 3, 3, (0..9).map(|v| v as f32).collect()).unwrap();
        let p = t.reflect_pad(4, 5);
        assert_eq!(p.at(0, 3, 0), t.at(0, 1, 0));
        assert_eq!(p.at(0, 0, 3), t.at(0, 0, 1));
        assert_eq!(p.at(0, 0, 4), t.at(0, 0, 0));
        assert_eq!(p.crop(3, 3), t);
    }
}
