//! Dual-decoder encoder–decoder network.
//!
//! One contracting path feeds two expansive paths: a concatenation-skip
//! (U-Net style) decoder and an addition-skip (FCN style) decoder. Their
//! full-resolution features are concatenated and passed through three
//! parallel dilated 3×3 convolutions, dropout, and a 1×1 softmax classifier.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    dropout_mask, maxpool2x2, maxpool2x2_backward, relu_backward, relu_inplace, softmax_backward, softmax_channels,
    Conv2d, Param, UpConv2x2,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// 1 (single B-scan), 3 (adjacent B-scans) or 4 (adjacent B-scans + distance map).
    pub in_channels: usize,
    /// 3 for the ILM/BM partition, 8 for layers + fluid.
    pub num_classes: usize,
    pub base_features: usize,
    pub depth: usize,
    pub dilation_rates: [usize; 3],
    pub dilated_branch_features: usize,
    pub dropout_rate: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            num_classes: 8,
            base_features: 64,
            depth: 4,
            dilation_rates: [1, 2, 4],
            dilated_branch_features: 64,
            dropout_rate: 0.5,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if ![1, 3, 4].contains(&self.in_channels) {
            return fail(format!("in_channels must be 1, 3 or 4 (got {})", self.in_channels));
        }
        if ![3, 8].contains(&self.num_classes) {
            return fail(format!("num_classes must be 3 or 8 (got {})", self.num_classes));
        }
        if self.depth == 0 || self.depth > 8 {
            return fail(format!("depth must be in 1..=8 (got {})", self.depth));
        }
        if self.base_features == 0 || self.dilated_branch_features == 0 {
            return fail("feature counts must be positive".into());
        }
        if self.dilation_rates.contains(&0) {
            return fail("dilation rates must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate must be in [0, 1) (got {})", self.dropout_rate));
        }
        Ok(())
    }

    /// Feature maps per contracting block: `base · 2^i` for `i < depth`.
    pub fn block_features(&self) -> Vec<usize> {
        (0..self.depth).map(|i| self.base_features << i).collect()
    }

    pub fn bottleneck_features(&self) -> usize {
        self.base_features << self.depth
    }

    /// Spatial dims must be multiples of this for the pooling chain.
    pub fn size_multiple(&self) -> usize {
        1 << self.depth
    }
}

/// Decoder branch selector used for branch-liveness checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    UNet,
    Fcn,
}

#[derive(Clone, Debug, PartialEq)]
struct DoubleConv<T> {
    first: Conv2d<T>,
    second: Conv2d<T>,
}

impl<T: Scalar> DoubleConv<T> {
    fn new(cin: usize, cout: usize, rng: &mut dyn RngCore) -> Self {
        Self { first: Conv2d::new(cin, cout, 3, 1, rng), second: Conv2d::new(cout, cout, 3, 1, rng) }
    }

    fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
        let mut mid = self.first.forward(x);
        relu_inplace(&mut mid);
        let mut out = self.second.forward(&mid);
        relu_inplace(&mut out);
        (mid, out)
    }

    fn backward(
        &mut self,
        x: &Tensor<T>,
        mid: &Tensor<T>,
        out: &Tensor<T>,
        mut dout: Tensor<T>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        relu_backward(out, &mut dout);
        let mut dmid = self.second.backward(mid, &dout, true).expect("dx requested");
        relu_backward(mid, &mut dmid);
        self.first.backward(x, &dmid, need_dx)
    }
}

/// The segmentation network. Parameters are plain values; concurrent
/// inference through `&self` is safe.
#[derive(Clone, Debug, PartialEq)]
pub struct LfUNet<T> {
    config: NetworkConfig,
    encoder: Vec<DoubleConv<T>>,
    bottleneck: DoubleConv<T>,
    unet_up: Vec<UpConv2x2<T>>,
    unet_dec: Vec<DoubleConv<T>>,
    fcn_up: Vec<UpConv2x2<T>>,
    fcn_dec: Vec<Conv2d<T>>,
    dilated: Vec<Conv2d<T>>,
    classifier: Conv2d<T>,
}

/// Activations cached by a forward pass, in padded coordinates.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    height: usize,
    width: usize,
    input: Tensor<T>,
    enc_mid: Vec<Tensor<T>>,
    enc_out: Vec<Tensor<T>>,
    pooled: Vec<Tensor<T>>,
    pool_arg: Vec<Vec<u8>>,
    bott_mid: Tensor<T>,
    bott_out: Tensor<T>,
    unet_cat: Vec<Tensor<T>>,
    unet_mid: Vec<Tensor<T>>,
    unet_out: Vec<Tensor<T>>,
    fcn_sum: Vec<Tensor<T>>,
    fcn_out: Vec<Tensor<T>>,
    merged: Tensor<T>,
    head_out: Vec<Tensor<T>>,
    dropout: Option<Vec<T>>,
    dropped: Tensor<T>,
    ablate: Option<Branch>,
    probs: Tensor<T>,
}

impl<T: Scalar> Trace<T> {
    /// Class probabilities cropped back to the caller's spatial dims.
    pub fn probabilities(&self) -> Tensor<T> {
        self.probs.crop(self.height, self.width)
    }

    pub fn padded_dims(&self) -> (usize, usize) {
        (self.probs.height(), self.probs.width())
    }
}

impl<T: Scalar> LfUNet<T> {
    pub fn new(config: NetworkConfig, rng: &mut dyn RngCore) -> Result<Self> {
        config.validate()?;
        let feats = config.block_features();
        let mut encoder = Vec::with_capacity(config.depth);
        let mut cin = config.in_channels;
        for &f in &feats {
            encoder.push(DoubleConv::new(cin, f, rng));
            cin = f;
        }
        let bottleneck = DoubleConv::new(cin, config.bottleneck_features(), rng);
        let mut unet_up = Vec::new();
        let mut unet_dec = Vec::new();
        let mut fcn_up = Vec::new();
        let mut fcn_dec = Vec::new();
        for &f in &feats {
            unet_up.push(UpConv2x2::new(2 * f, f, rng));
            unet_dec.push(DoubleConv::new(2 * f, f, rng));
        }
        for &f in &feats {
            fcn_up.push(UpConv2x2::new(2 * f, f, rng));
            fcn_dec.push(Conv2d::new(f, f, 3, 1, rng));
        }
        let merged = 2 * config.base_features;
        let dilated = config
            .dilation_rates
            .iter()
            .map(|&d| Conv2d::new(merged, config.dilated_branch_features, 3, d, rng))
            .collect();
        let classifier = Conv2d::new(3 * config.dilated_branch_features, config.num_classes, 1, 1, rng);
        Ok(Self { config, encoder, bottleneck, unet_up, unet_dec, fcn_up, fcn_dec, dilated, classifier })
    }

    pub fn with_seed(config: NetworkConfig, seed: u64) -> Result<Self> {
        Self::new(config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Every trainable tensor with a stable dotted name, in a fixed order.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out: Vec<(String, &mut Param<T>)> = Vec::new();
        fn conv<'a, T>(out: &mut Vec<(String, &'a mut Param<T>)>, name: String, c: &'a mut Conv2d<T>) {
            out.push((format!("{name}.weight"), &mut c.weight));
            out.push((format!("{name}.bias"), &mut c.bias));
        }
        fn double<'a, T>(out: &mut Vec<(String, &'a mut Param<T>)>, name: String, d: &'a mut DoubleConv<T>) {
            conv(out, format!("{name}.conv1"), &mut d.first);
            conv(out, format!("{name}.conv2"), &mut d.second);
        }
        fn up<'a, T>(out: &mut Vec<(String, &'a mut Param<T>)>, name: String, u: &'a mut UpConv2x2<T>) {
            out.push((format!("{name}.weight"), &mut u.weight));
            out.push((format!("{name}.bias"), &mut u.bias));
        }
        for (i, b) in self.encoder.iter_mut().enumerate() {
            double(&mut out, format!("encoder.{i}"), b);
        }
        double(&mut out, "bottleneck".into(), &mut self.bottleneck);
        for (i, (u, d)) in self.unet_up.iter_mut().zip(self.unet_dec.iter_mut()).enumerate() {
            up(&mut out, format!("unet.{i}.up"), u);
            double(&mut out, format!("unet.{i}.dec"), d);
        }
        for (i, (u, d)) in self.fcn_up.iter_mut().zip(self.fcn_dec.iter_mut()).enumerate() {
            up(&mut out, format!("fcn.{i}.up"), u);
            conv(&mut out, format!("fcn.{i}.dec"), d);
        }
        for (j, d) in self.dilated.iter_mut().enumerate() {
            conv(&mut out, format!("head.dilated.{j}"), d);
        }
        conv(&mut out, "head.classifier".into(), &mut self.classifier);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.named_params_mut().into_iter().map(|(_, p)| p).collect()
    }

    /// Read-only view of [`LfUNet::named_params_mut`].
    pub fn named_params(&self) -> Vec<(String, Param<T>)> {
        let mut copy = self.clone();
        copy.named_params_mut().into_iter().map(|(n, p)| (n, p.clone())).collect()
    }

    pub fn num_parameters(&self) -> usize {
        let mut copy = self.clone();
        copy.params_mut().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Eval-mode probabilities with the same spatial dims as the input.
    pub fn predict(&self, stack: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(stack, None)?.probabilities())
    }

    /// Forward pass. Dropout is active iff `dropout_rng` is given.
    ///
    /// Inputs whose dims are not a multiple of `2^depth` are reflect-padded on
    /// the bottom/right; [`Trace::probabilities`] crops back.
    pub fn forward(&self, stack: &Tensor<T>, dropout_rng: Option<&mut dyn RngCore>) -> Result<Trace<T>> {
        self.forward_ablated(stack, dropout_rng, None)
    }

    /// Like [`LfUNet::forward`] but with one decoder's final features zeroed.
    pub fn forward_ablated(
        &self,
        stack: &Tensor<T>,
        dropout_rng: Option<&mut dyn RngCore>,
        ablate: Option<Branch>,
    ) -> Result<Trace<T>> {
        if stack.channels() != self.config.in_channels {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {}",
                self.config.in_channels,
                stack.channels()
            )));
        }
        let (h, w) = (stack.height(), stack.width());
        let (ph, pw) = padded_dims(h, w, self.config.size_multiple());
        if ph - h >= h || pw - w >= w {
            return Err(Error::Shape(format!("{h}x{w} input is too small to reflect-pad to {ph}x{pw}")));
        }
        Ok(self.trace(stack.reflect_pad(ph, pw), h, w, dropout_rng, ablate))
    }

    fn trace(
        &self,
        input: Tensor<T>,
        height: usize,
        width: usize,
        dropout_rng: Option<&mut dyn RngCore>,
        ablate: Option<Branch>,
    ) -> Trace<T> {
        let depth = self.config.depth;
        let mut enc_mid = Vec::with_capacity(depth);
        let mut enc_out = Vec::with_capacity(depth);
        let mut pooled: Vec<Tensor<T>> = Vec::with_capacity(depth);
        let mut pool_arg = Vec::with_capacity(depth);
        for (i, block) in self.encoder.iter().enumerate() {
            let x = if i == 0 { &input } else { &pooled[i - 1] };
            let (mid, out) = block.forward(x);
            let (p, arg) = maxpool2x2(&out);
            enc_mid.push(mid);
            enc_out.push(out);
            pooled.push(p);
            pool_arg.push(arg);
        }
        let (bott_mid, bott_out) = self.bottleneck.forward(&pooled[depth - 1]);

        // Expansive paths run from the coarsest level up; stored by level.
        let mut unet_cat = Vec::with_capacity(depth);
        let mut unet_mid = Vec::with_capacity(depth);
        let mut unet_out: Vec<Tensor<T>> = Vec::with_capacity(depth);
        let mut fcn_sum = Vec::with_capacity(depth);
        let mut fcn_out: Vec<Tensor<T>> = Vec::with_capacity(depth);
        for i in (0..depth).rev() {
            let prev_u = unet_out.last().unwrap_or(&bott_out);
            let up = self.unet_up[i].forward(prev_u);
            let cat = Tensor::concat(&[&enc_out[i], &up]);
            let (mid, out) = self.unet_dec[i].forward(&cat);
            unet_cat.push(cat);
            unet_mid.push(mid);
            unet_out.push(out);

            let prev_f = fcn_out.last().unwrap_or(&bott_out);
            let mut sum = self.fcn_up[i].forward(prev_f);
            sum.add_assign(&enc_out[i]);
            let mut out = self.fcn_dec[i].forward(&sum);
            relu_inplace(&mut out);
            fcn_sum.push(sum);
            fcn_out.push(out);
        }
        for v in [&mut unet_cat, &mut unet_mid, &mut unet_out, &mut fcn_sum, &mut fcn_out] {
            v.reverse();
        }

        let mut u0 = unet_out[0].clone();
        let mut f0 = fcn_out[0].clone();
        match ablate {
            Some(Branch::UNet) => u0.data_mut().iter_mut().for_each(|v| *v = T::zero()),
            Some(Branch::Fcn) => f0.data_mut().iter_mut().for_each(|v| *v = T::zero()),
            None => {}
        }
        let merged = Tensor::concat(&[&u0, &f0]);
        let head_out: Vec<Tensor<T>> = self
            .dilated
            .iter()
            .map(|conv| {
                let mut y = conv.forward(&merged);
                relu_inplace(&mut y);
                y
            })
            .collect();
        let mut dropped = Tensor::concat(&head_out.iter().collect::<Vec<_>>());
        let dropout = match dropout_rng {
            Some(rng) if self.config.dropout_rate > 0.0 => {
                let mask: Vec<T> = dropout_mask(dropped.data().len(), self.config.dropout_rate, rng);
                for (v, &m) in dropped.data_mut().iter_mut().zip(&mask) {
                    *v = *v * m;
                }
                Some(mask)
            }
            _ => None,
        };
        let logits = self.classifier.forward(&dropped);
        let probs = softmax_channels(&logits);
        Trace {
            height,
            width,
            input,
            enc_mid,
            enc_out,
            pooled,
            pool_arg,
            bott_mid,
            bott_out,
            unet_cat,
            unet_mid,
            unet_out,
            fcn_sum,
            fcn_out,
            merged,
            head_out,
            dropout,
            dropped,
            ablate,
            probs,
        }
    }

    /// Accumulates parameter gradients given `dL/dp` on the cropped
    /// probability map returned by [`Trace::probabilities`].
    pub fn backward(&mut self, trace: &Trace<T>, dprobs: &Tensor<T>) {
        let (ph, pw) = trace.padded_dims();
        assert_eq!((dprobs.height(), dprobs.width()), (trace.height, trace.width));
        let dp = dprobs.zero_pad(ph, pw);
        let dlogits = softmax_backward(&trace.probs, &dp);
        self.backward_logits(trace, &dlogits);
    }

    fn backward_logits(&mut self, t: &Trace<T>, dlogits: &Tensor<T>) {
        let depth = self.config.depth;
        let mut dhead = self.classifier.backward(&t.dropped, dlogits, true).expect("dx");
        if let Some(mask) = &t.dropout {
            for (g, &m) in dhead.data_mut().iter_mut().zip(mask) {
                *g = *g * m;
            }
        }
        let df = self.config.dilated_branch_features;
        let mut dmerged = Tensor::zeros(t.merged.channels(), t.merged.height(), t.merged.width());
        for (j, mut dj) in dhead.split(&[df, df, df]).into_iter().enumerate() {
            relu_backward(&t.head_out[j], &mut dj);
            let g = self.dilated[j].backward(&t.merged, &dj, true).expect("dx");
            dmerged.add_assign(&g);
        }
        let base = self.config.base_features;
        let mut halves = dmerged.split(&[base, base]).into_iter();
        let mut du = halves.next().expect("two halves");
        let mut dfcn = halves.next().expect("two halves");
        match t.ablate {
            Some(Branch::UNet) => du.data_mut().iter_mut().for_each(|v| *v = T::zero()),
            Some(Branch::Fcn) => dfcn.data_mut().iter_mut().for_each(|v| *v = T::zero()),
            None => {}
        }

        let mut dskip: Vec<Tensor<T>> =
            t.enc_out.iter().map(|e| Tensor::zeros(e.channels(), e.height(), e.width())).collect();
        let mut dbott = Tensor::zeros(t.bott_out.channels(), t.bott_out.height(), t.bott_out.width());

        for i in 0..depth {
            let prev = if i + 1 < depth { &t.unet_out[i + 1] } else { &t.bott_out };
            let dcat = self.unet_dec[i].backward(&t.unet_cat[i], &t.unet_mid[i], &t.unet_out[i], du, true).expect("dx");
            let f = self.config.base_features << i;
            let mut parts = dcat.split(&[f, f]).into_iter();
            dskip[i].add_assign(&parts.next().expect("skip half"));
            let dup = parts.next().expect("up half");
            let dprev = self.unet_up[i].backward(prev, &dup);
            if i + 1 < depth {
                du = dprev;
            } else {
                dbott.add_assign(&dprev);
                du = Tensor::zeros(0, 0, 0);
            }
        }

        for i in 0..depth {
            let prev = if i + 1 < depth { &t.fcn_out[i + 1] } else { &t.bott_out };
            relu_backward(&t.fcn_out[i], &mut dfcn);
            let dsum = self.fcn_dec[i].backward(&t.fcn_sum[i], &dfcn, true).expect("dx");
            dskip[i].add_assign(&dsum);
            let dprev = self.fcn_up[i].backward(prev, &dsum);
            if i + 1 < depth {
                dfcn = dprev;
            } else {
                dbott.add_assign(&dprev);
                dfcn = Tensor::zeros(0, 0, 0);
            }
        }

        let mut dpooled =
            self.bottleneck.backward(&t.pooled[depth - 1], &t.bott_mid, &t.bott_out, dbott, true).expect("dx");
        for i in (0..depth).rev() {
            let mut dout = maxpool2x2_backward(&dpooled, &t.pool_arg[i]);
            dout.add_assign(&dskip[i]);
            let x = if i == 0 { &t.input } else { &t.pooled[i - 1] };
            let need_dx = i > 0;
            match self.encoder[i].backward(x, &t.enc_mid[i], &t.enc_out[i], dout, need_dx) {
                Some(dx) => dpooled = dx,
                None => break,
            }
        }
    }

    /// Replaces parameter values by name; every parameter must be supplied
    /// with a matching shape.
    pub fn load_named(&mut self, values: &[(String, Vec<usize>, Vec<T>)]) -> Result<()> {
        let mut params = self.named_params_mut();
        if params.len() != values.len() {
            return Err(Error::Shape(format!("checkpoint has {} tensors, network has {}", values.len(), params.len())));
        }
        for (name, p) in params.iter_mut() {
            let (_, shape, data) = values
                .iter()
                .find(|(n, _, _)| n == name)
                .ok_or_else(|| Error::Shape(format!("checkpoint is missing tensor {name}")))?;
            if *shape != p.shape || data.len() != p.value.len() {
                return Err(Error::Shape(format!("tensor {name} has shape {:?}, expected {:?}", shape, p.shape)));
            }
            p.value.copy_from_slice(data);
        }
        Ok(())
    }

    /// Fills every weight with `U(-scale, scale)` draws (tests and diagnostics).
    pub fn randomize<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        for p in self.params_mut() {
            for v in &mut p.value {
                *v = T::of(rng.random_range(-scale..scale));
            }
        }
    }
}

/// Next multiple of `m` in each dimension.
pub fn padded_dims(h: usize, w: usize, m: usize) -> (usize, usize) {
    (h.div_ceil(m) * m, w.div_ceil(m) * m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_arithmetic() {
        assert_eq!(padded_dims(500, 245, 16), (512, 256));
        assert_eq!(padded_dims(64, 64, 16), (64, 64));
        assert_eq!(padded_dims(245, 245, 16), (256, 256));
    }

    #[test]
    fn rejects_bad_configs() {
        let ok = NetworkConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            NetworkConfig { in_channels: 2, ..ok.clone() },
            NetworkConfig { num_classes: 5, ..ok.clone() },
            NetworkConfig { depth: 0, ..ok.clone() },
            NetworkConfig { dropout_rate: 1.0, ..ok.clone() },
            NetworkConfig { dilation_rates: [1, 0, 4], ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn block_features_double() {
        let c = NetworkConfig::default();
        assert_eq!(c.block_features(), [64, 128, 256, 512]);
        assert_eq!(c.bottleneck_features(), 1024);
    }
}
