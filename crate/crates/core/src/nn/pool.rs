use alloc::vec::Vec;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// 2×2 max pooling with stride 2. Returns the pooled map and the winning
/// offset (`dy·2 + dx`, first maximum on ties) for each output pixel.
pub fn maxpool2x2<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<u8>) {
    let (c, h, w) = (x.channels(), x.height(), x.width());
    assert!(h % 2 == 0 && w % 2 == 0, "max-pool needs even spatial dims");
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(c, oh, ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = x.at(ch, 2 * i, 2 * j);
                let mut q = 0u8;
                for (k, (dy, dx)) in [(0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                    let v = x.at(ch, 2 * i + dy, 2 * j + dx);
                    if v > best {
                        best = v;
                        q = k as u8 + 1;
                    }
                }
                out.set(ch, i, j, best);
                arg.push(q);
            }
        }
    }
    (out, arg)
}

pub fn maxpool2x2_backward<T: Scalar>(dout: &Tensor<T>, arg: &[u8]) -> Tensor<T> {
    let (c, oh, ow) = (dout.channels(), dout.height(), dout.width());
    let mut dx = Tensor::zeros(c, oh * 2, ow * 2);
    let mut idx = 0;
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let q = arg[idx] as usize;
                dx.set(ch, 2 * i + q / 2, 2 * j + q % 2, dout.at(ch, i, j));
                idx += 1;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_block_maximum_and_routes_gradient() {
        let x = Tensor::<f32>::from_vec(1, 2, 4, vec![1.0, 5.0, 0.0, 0.0, 3.0, 2.0, 0.0, 9.0]).unwrap();
        let (y, arg) = maxpool2x2(&x);
        assert_eq!(y.data(), &[5.0, 9.0]);
        let dx = maxpool2x2_backward(&Tensor::from_vec(1, 1, 2, vec![1.0, 2.0]).unwrap(), &arg);
        assert_eq!(dx.data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
    }
}
