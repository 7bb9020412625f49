//! Composite objective: class-weighted Dice loss plus pixel-weighted
//! logistic loss, with boundary and retina emphasis in the pixel weights.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::data::LabelMap;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Lower and upper clip of inverse-frequency class weights.
pub const CLASS_WEIGHT_RANGE: (f64, f64) = (0.1, 10.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Dice term multiplier.
    pub lambda1: f64,
    /// Logistic term multiplier.
    pub lambda2: f64,
    /// Extra weight on label-boundary pixels.
    pub omega1: f64,
    /// Extra weight on retina pixels.
    pub omega2: f64,
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda1: 0.5, lambda2: 1.0, omega1: 10.0, omega2: 5.0, epsilon: 1e-6 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda1, self.lambda2, self.omega1, self.omega2, self.epsilon];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("loss constants must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub Vec<f64>);

/// Per-pixel logistic-loss weights, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelWeightMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl PixelWeightMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::Shape(format!("{} weights for {height}x{width}", values.len())));
        }
        Ok(Self { height, width, values })
    }

    pub fn uniform(height: usize, width: usize) -> Self {
        Self { height, width, values: vec![1.0; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Inverse-frequency class weights `N / (C · max(N_l, 1))`, clipped.
pub fn class_weights<'a>(labels: impl IntoIterator<Item = &'a LabelMap>) -> Result<ClassWeights> {
    let mut counts: Vec<u64> = Vec::new();
    let mut total = 0u64;
    for m in labels {
        if counts.is_empty() {
            counts = vec![0; m.scheme().num_classes()];
        } else if counts.len() != m.scheme().num_classes() {
            return Err(Error::InvalidData("label maps use different class schemes".into()));
        }
        for &l in m.labels() {
            counts[l as usize] += 1;
        }
        total += m.labels().len() as u64;
    }
    if counts.is_empty() {
        return Err(Error::InvalidData("class weights need at least one label map".into()));
    }
    Ok(class_weights_from_counts(&counts, total))
}

pub fn class_weights_from_counts(counts: &[u64], total: u64) -> ClassWeights {
    let c = counts.len() as f64;
    let (lo, hi) = CLASS_WEIGHT_RANGE;
    ClassWeights(counts.iter().map(|&n| (total as f64 / (c * n.max(1) as f64)).clamp(lo, hi)).collect())
}

/// `1 + ω₁·[boundary] + ω₂·[retina]`; a pixel is on a boundary when any
/// 4-neighbour carries a different label.
pub fn pixel_weight_map(labels: &LabelMap, cfg: &LossConfig) -> PixelWeightMap {
    let (h, w) = (labels.height(), labels.width());
    let scheme = labels.scheme();
    let mut values = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let l = labels.at(y, x);
            let boundary = (y > 0 && labels.at(y - 1, x) != l)
                || (y + 1 < h && labels.at(y + 1, x) != l)
                || (x > 0 && labels.at(y, x - 1) != l)
                || (x + 1 < w && labels.at(y, x + 1) != l);
            let mut v = 1.0;
            if boundary {
                v += cfg.omega1;
            }
            if scheme.is_retina(l) {
                v += cfg.omega2;
            }
            values.push(v);
        }
    }
    PixelWeightMap { height: h, width: w, values }
}

fn check_shapes<T: Scalar>(prob: &Tensor<T>, truth: &LabelMap) -> Result<()> {
    if prob.height() != truth.height()
        || prob.width() != truth.width()
        || prob.channels() != truth.scheme().num_classes()
    {
        return Err(Error::Shape(format!(
            "probabilities {}x{}x{} vs {}x{} labels with {} classes",
            prob.channels(),
            prob.height(),
            prob.width(),
            truth.height(),
            truth.width(),
            truth.scheme().num_classes()
        )));
    }
    Ok(())
}

/// Sums behind the Dice ratio.
struct DiceTerms {
    overlap: f64,
    denom: f64,
}

fn dice_terms<T: Scalar>(prob: &Tensor<T>, truth: &LabelMap, cw: &ClassWeights, eps: f64) -> Result<DiceTerms> {
    check_shapes(prob, truth)?;
    if cw.0.len() != prob.channels() {
        return Err(Error::Shape(format!("{} class weights for {} classes", cw.0.len(), prob.channels())));
    }
    let n = prob.plane_len();
    let data = prob.data();
    let mut overlap = 0.0;
    let mut p2 = 0.0;
    for c in 0..prob.channels() {
        for v in &data[c * n..(c + 1) * n] {
            let v = v.as_f64();
            p2 += v * v;
        }
    }
    for (i, &l) in truth.labels().iter().enumerate() {
        overlap += cw.0[l as usize] * data[l as usize * n + i].as_f64();
    }
    // One-hot truth: Σ g² is the pixel count.
    Ok(DiceTerms { overlap, denom: p2 + n as f64 + eps })
}

/// `1 − 2·Σ_l Σ_x ω_l p_l g_l / (Σ p² + Σ g² + ε)` over all classes at once.
pub fn dice_loss<T: Scalar>(prob: &Tensor<T>, truth: &LabelMap, cw: &ClassWeights, eps: f64) -> Result<f64> {
    let t = dice_terms(prob, truth, cw, eps)?;
    Ok(1.0 - 2.0 * t.overlap / t.denom)
}

pub fn dice_loss_grad<T: Scalar>(
    prob: &Tensor<T>,
    truth: &LabelMap,
    cw: &ClassWeights,
    eps: f64,
) -> Result<(f64, Tensor<T>)> {
    let t = dice_terms(prob, truth, cw, eps)?;
    let n = prob.plane_len();
    let d2 = t.denom * t.denom;
    // ∂/∂p_c(x) = −2 [ω_c g_c(x) D − N · 2 p_c(x)] / D²
    let mut grad = prob.map(|p| T::of(4.0 * t.overlap * p.as_f64() / d2));
    let scale = -2.0 * t.denom / d2;
    for (i, &l) in truth.labels().iter().enumerate() {
        let g = &mut grad.data_mut()[l as usize * n + i];
        *g = *g + T::of(scale * cw.0[l as usize]);
    }
    Ok((1.0 - 2.0 * t.overlap / t.denom, grad))
}

fn check_weights(pw: &PixelWeightMap, truth: &LabelMap) -> Result<()> {
    if pw.height != truth.height() || pw.width != truth.width() {
        return Err(Error::Shape("pixel weight map dims differ from the labels".into()));
    }
    Ok(())
}

/// `−Σ_x ω(x) log(p_{l(x)}(x) + ε) / Σ_x ω(x)`.
pub fn logistic_loss<T: Scalar>(prob: &Tensor<T>, truth: &LabelMap, pw: &PixelWeightMap, eps: f64) -> Result<f64> {
    check_shapes(prob, truth)?;
    check_weights(pw, truth)?;
    let n = prob.plane_len();
    let data = prob.data();
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for (i, (&l, &w)) in truth.labels().iter().zip(&pw.values).enumerate() {
        acc -= w * Float::ln(data[l as usize * n + i].as_f64() + eps);
        wsum += w;
    }
    Ok(if wsum > 0.0 { acc / wsum } else { 0.0 })
}

pub fn logistic_loss_grad<T: Scalar>(
    prob: &Tensor<T>,
    truth: &LabelMap,
    pw: &PixelWeightMap,
    eps: f64,
) -> Result<(f64, Tensor<T>)> {
    let loss = logistic_loss(prob, truth, pw, eps)?;
    let n = prob.plane_len();
    let wsum: f64 = pw.values.iter().sum();
    let mut grad = Tensor::zeros(prob.channels(), prob.height(), prob.width());
    if wsum > 0.0 {
        let data = prob.data();
        let gd = grad.data_mut();
        for (i, (&l, &w)) in truth.labels().iter().zip(&pw.values).enumerate() {
            let k = l as usize * n + i;
            gd[k] = T::of(-w / ((data[k].as_f64() + eps) * wsum));
        }
    }
    Ok((loss, grad))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub dice: f64,
    pub logistic: f64,
    pub total: f64,
}

impl LossValue {
    pub fn combine(dice: f64, logistic: f64, cfg: &LossConfig) -> Self {
        Self { dice, logistic, total: cfg.lambda1 * dice + cfg.lambda2 * logistic }
    }
}

/// `λ₁·Dice + λ₂·logistic`.
pub fn total_loss<T: Scalar>(
    prob: &Tensor<T>,
    truth: &LabelMap,
    cw: &ClassWeights,
    pw: &PixelWeightMap,
    cfg: &LossConfig,
) -> Result<LossValue> {
    let dice = dice_loss(prob, truth, cw, cfg.epsilon)?;
    let logistic = logistic_loss(prob, truth, pw, cfg.epsilon)?;
    Ok(LossValue::combine(dice, logistic, cfg))
}

/// Loss and its gradient w.r.t. the probabilities.
pub fn total_loss_grad<T: Scalar>(
    prob: &Tensor<T>,
    truth: &LabelMap,
    cw: &ClassWeights,
    pw: &PixelWeightMap,
    cfg: &LossConfig,
) -> Result<(LossValue, Tensor<T>)> {
    let (dice, gd) = dice_loss_grad(prob, truth, cw, cfg.epsilon)?;
    let (logistic, gl) = logistic_loss_grad(prob, truth, pw, cfg.epsilon)?;
    let (l1, l2) = (T::of(cfg.lambda1), T::of(cfg.lambda2));
    let mut grad = gd;
    for (a, &b) in grad.data_mut().iter_mut().zip(gl.data()) {
        *a = l1 * *a + l2 * b;
    }
    Ok((LossValue::combine(dice, logistic, cfg), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ClassScheme;

    #[test]
    fn balanced_and_skewed_class_weights() {
        let w = class_weights_from_counts(&[50, 50], 100);
        assert_eq!(w.0, [1.0, 1.0]);
        let w = class_weights_from_counts(&[90, 10], 100);
        assert!((w.0[0] - 100.0 / 180.0).abs() < 1e-15);
        assert_eq!(w.0[1], 5.0);
        // absent classes hit the ceiling rather than dividing by zero
        let w = class_weights_from_counts(&[100, 0], 100);
        assert_eq!(w.0, [0.5, 10.0]);
    }

    #[test]
    fn half_split_weight_map() {
        let labels =
            LabelMap::new(4, 4, ClassScheme::Stage2, [0u8, 0, 1, 1].iter().flat_map(|&l| [l; 4]).collect()).unwrap();
        let pw = pixel_weight_map(&labels, &LossConfig::default());
        let rows: Vec<f64> = (0..4).map(|y| pw.at(y, 0)).collect();
        assert_eq!(rows, [1.0, 11.0, 16.0, 6.0]);
    }

    #[test]
    fn single_pixel_log_two() {
        let prob = Tensor::<f64>::from_vec(3, 1, 1, vec![0.5, 0.25, 0.25]).unwrap();
        let truth = LabelMap::new(1, 1, ClassScheme::Stage1, vec![0]).unwrap();
        let l = logistic_loss(&prob, &truth, &PixelWeightMap::uniform(1, 1), 0.0).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn disjoint_dice_is_one() {
        let truth = LabelMap::new(1, 2, ClassScheme::Stage1, vec![0, 1]).unwrap();
        let prob = Tensor::<f64>::from_vec(3, 1, 2, vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let l = dice_loss(&prob, &truth, &ClassWeights(vec![1.0; 3]), 1e-6).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let truth = LabelMap::filled(2, 2, ClassScheme::Stage2, 0).unwrap();
        let prob = Tensor::<f64>::zeros(3, 2, 2);
        assert!(matches!(dice_loss(&prob, &truth, &ClassWeights(vec![1.0; 8]), 1e-6), Err(Error::Shape(_))));
        assert!(matches!(logistic_loss(&prob, &truth, &PixelWeightMap::uniform(2, 2), 1e-6), Err(Error::Shape(_))));
    }

    #[test]
    fn combination_is_affine() {
        let v = LossValue::combine(0.2, 0.4, &LossConfig::default());
        assert!((v.total - 0.5).abs() < 1e-15);
    }
}
