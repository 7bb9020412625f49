//! Label-preserving geometric augmentation: horizontal flip, rotation and
//! scaling about the image centre. Images are resampled bilinearly, label
//! and weight maps by nearest neighbour.

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabelMap;
use crate::error::Result;
use crate::losses::PixelWeightMap;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub enabled: bool,
    /// Probability of a horizontal flip.
    pub flip_probability: f64,
    /// Rotation range in degrees.
    pub rotation_deg: [f64; 2],
    /// Scale-factor range.
    pub scale: [f64; 2],
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { enabled: true, flip_probability: 0.5, rotation_deg: [-25.0, 25.0], scale: [0.5, 1.5] }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform {
    pub flip: bool,
    pub rotation_deg: f64,
    pub scale: f64,
}

impl Transform {
    pub const IDENTITY: Self = Self { flip: false, rotation_deg: 0.0, scale: 1.0 };

    pub fn sample<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> Self {
        let flip = rng.random_bool(cfg.flip_probability.clamp(0.0, 1.0));
        let draw = |r: [f64; 2], rng: &mut R| if r[0] < r[1] { rng.random_range(r[0]..=r[1]) } else { r[0] };
        let rotation_deg = draw(cfg.rotation_deg, rng);
        let scale = draw(cfg.scale, rng);
        Self { flip, rotation_deg, scale }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// Source coordinate `(row, col)` for an output pixel.
    fn source(&self, y: usize, x: usize, h: usize, w: usize) -> (f64, f64) {
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        let xf = if self.flip { (w - 1 - x) as f64 } else { x as f64 };
        let (dy, dx) = (y as f64 - cy, xf - cx);
        let (s, c) = Float::sin_cos(self.rotation_deg.to_radians());
        (cy + (c * dy - s * dx) / self.scale, cx + (s * dy + c * dx) / self.scale)
    }
}

/// One training example: network input, target labels, pixel weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Tensor<f32>,
    pub labels: LabelMap,
    pub weights: PixelWeightMap,
}

/// Applies `t` to every channel, the labels and the weights. Pixels mapped
/// from outside the canvas become intensity 0, class 0, weight 1.
pub fn apply(sample: &Sample, t: &Transform) -> Result<Sample> {
    if t.is_identity() {
        return Ok(sample.clone());
    }
    let (h, w) = (sample.labels.height(), sample.labels.width());
    let mut input = Tensor::zeros(sample.input.channels(), h, w);
    let mut labels = alloc::vec![0u8; h * w];
    let mut weights = alloc::vec![1.0f64; h * w];
    let (hm, wm) = ((h - 1) as f64, (w - 1) as f64);
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = t.source(y, x, h, w);
            let (ry, rx) = (Float::round(sy), Float::round(sx));
            if ry >= 0.0 && ry <= hm && rx >= 0.0 && rx <= wm {
                let (ny, nx) = (ry as usize, rx as usize);
                labels[y * w + x] = sample.labels.at(ny, nx);
                weights[y * w + x] = sample.weights.at(ny, nx);
            }
            if sy >= 0.0 && sy <= hm && sx >= 0.0 && sx <= wm {
                let (y0, x0) = (Float::floor(sy) as usize, Float::floor(sx) as usize);
                let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                let (fy, fx) = ((sy - y0 as f64) as f32, (sx - x0 as f64) as f32);
                for c in 0..input.channels() {
                    let p = sample.input.plane(c);
                    let top = p[y0 * w + x0] * (1.0 - fx) + p[y0 * w + x1] * fx;
                    let bot = p[y1 * w + x0] * (1.0 - fx) + p[y1 * w + x1] * fx;
                    input.set(c, y, x, top * (1.0 - fy) + bot * fy);
                }
            }
        }
    }
    Ok(Sample {
        input,
        labels: LabelMap::new(h, w, sample.labels.scheme(), labels)?,
        weights: PixelWeightMap::new(h, w, weights)?,
    })
}

pub fn augment<R: Rng + ?Sized>(sample: &Sample, cfg: &AugmentConfig, rng: &mut R) -> Result<Sample> {
    if !cfg.enabled {
        return Ok(sample.clone());
    }
    apply(sample, &Transform::sample(cfg, rng))
}
