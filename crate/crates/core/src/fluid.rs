//! Fluid components of a predicted label map, per-component features and
//! the forest that removes false-positive components.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::data::{class, LabelMap};
use crate::distmap::RelativeDistanceMap;
use crate::error::{Error, Result};
use crate::forest::{ForestConfig, RandomForest};

/// Fraction of a component that must overlap true fluid to count as a hit.
pub const TP_OVERLAP: f64 = 0.5;

pub const FEATURE_NAMES: [&str; 8] = [
    "area_px",
    "mean_intensity",
    "std_intensity",
    "mean_relative_distance",
    "bbox_aspect",
    "solidity",
    "boundary_distance_px",
    "centroid_relative_distance",
];

/// A 4-connected set of fluid pixels, as flat indices in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct FluidComponent {
    pub pixels: Vec<usize>,
}

/// 4-connected components of the fluid class.
pub fn fluid_components(labels: &LabelMap) -> Vec<FluidComponent> {
    let (h, w) = (labels.height(), labels.width());
    let lab = labels.labels();
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if seen[start] || lab[start] != class::FLUID {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(p) = stack.pop() {
            pixels.push(p);
            let (y, x) = (p / w, p % w);
            let mut visit = |q: usize| {
                if !seen[q] && lab[q] == class::FLUID {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
        }
        pixels.sort_unstable();
        out.push(FluidComponent { pixels });
    }
    out
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Area of the convex hull of the pixel squares.
fn hull_area(pixels: &[usize], w: usize) -> f64 {
    let mut pts: Vec<(i64, i64)> = pixels
        .iter()
        .flat_map(|&p| {
            let (y, x) = ((p / w) as i64, (p % w) as i64);
            [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)]
        })
        .collect();
    pts.sort_unstable();
    pts.dedup();
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(pts.len() + 1);
    for pass in 0..2 {
        let base = hull.len();
        let iter: &mut dyn Iterator<Item = &(i64, i64)> =
            if pass == 0 { &mut pts.iter() } else { &mut pts.iter().rev() };
        for &p in iter {
            while hull.len() >= base + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    let twice: i64 = (0..hull.len())
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    twice.abs() as f64 / 2.0
}

impl FluidComponent {
    /// Feature vector in the order of [`FEATURE_NAMES`]. `intensity` is the
    /// centre B-scan, `dist` the relative distance map used by stage 2.
    pub fn features(&self, labels: &LabelMap, intensity: &[f32], dist: &RelativeDistanceMap) -> Vec<f64> {
        let (h, w) = (labels.height(), labels.width());
        let n = self.pixels.len() as f64;
        let vals: Vec<f64> = self.pixels.iter().map(|&p| intensity[p] as f64).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let std = Float::sqrt(vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n);
        let mean_dist = self.pixels.iter().map(|&p| dist.values()[p]).sum::<f64>() / n;
        let (mut y0, mut y1, mut x0, mut x1) = (usize::MAX, 0, usize::MAX, 0);
        let (mut cy, mut cx) = (0.0, 0.0);
        for &p in &self.pixels {
            let (y, x) = (p / w, p % w);
            y0 = y0.min(y);
            y1 = y1.max(y);
            x0 = x0.min(x);
            x1 = x1.max(x);
            cy += y as f64;
            cx += x as f64;
        }
        cy /= n;
        cx /= n;
        let aspect = (y1 - y0 + 1) as f64 / (x1 - x0 + 1) as f64;
        let solidity = n / hull_area(&self.pixels, w);
        let col = (Float::round(cx) as usize).min(w - 1);
        let lab = labels.labels();
        let boundary = (0..h - 1)
            .filter(|&y| {
                let (a, b) = (lab[y * w + col], lab[(y + 1) * w + col]);
                a != b && a != class::FLUID && b != class::FLUID
            })
            .map(|y| Float::abs(cy - (y as f64 + 0.5)))
            .fold(h as f64, f64::min);
        let crow = (Float::round(cy) as usize).min(h - 1);
        vec![n, mean, std, mean_dist, aspect, solidity, boundary, dist.at(crow, col)]
    }

    /// Fraction of pixels that are fluid in `truth`.
    pub fn overlap(&self, truth: &LabelMap) -> f64 {
        let hits = self.pixels.iter().filter(|&&p| truth.labels()[p] == class::FLUID).count();
        hits as f64 / self.pixels.len() as f64
    }

    pub fn is_true_positive(&self, truth: &LabelMap) -> bool {
        self.overlap(truth) >= TP_OVERLAP
    }

    /// Most frequent non-fluid class among the 4-neighbours of the
    /// component; ties go to the lower id.
    pub fn surrounding_class(&self, labels: &LabelMap) -> u8 {
        let (h, w) = (labels.height(), labels.width());
        let lab = labels.labels();
        let mut counts = [0usize; 256];
        for &p in &self.pixels {
            let (y, x) = (p / w, p % w);
            let mut nb = |q: usize| {
                if lab[q] != class::FLUID {
                    counts[lab[q] as usize] += 1;
                }
            };
            if y > 0 {
                nb(p - w);
            }
            if y + 1 < h {
                nb(p + w);
            }
            if x > 0 {
                nb(p - 1);
            }
            if x + 1 < w {
                nb(p + 1);
            }
        }
        (0..=255u8).fold(0u8, |b, c| if counts[c as usize] > counts[b as usize] { c } else { b })
    }
}

/// Labelled training rows for the filter drawn from one predicted B-scan.
pub fn component_examples(
    pred: &LabelMap,
    intensity: &[f32],
    dist: &RelativeDistanceMap,
    truth: &LabelMap,
) -> Result<Vec<(Vec<f64>, bool)>> {
    check_dims(pred, intensity, dist)?;
    if truth.height() != pred.height() || truth.width() != pred.width() {
        return Err(Error::Shape("truth and prediction differ in size".into()));
    }
    Ok(fluid_components(pred).iter().map(|c| (c.features(pred, intensity, dist), c.is_true_positive(truth))).collect())
}

fn check_dims(pred: &LabelMap, intensity: &[f32], dist: &RelativeDistanceMap) -> Result<()> {
    let n = pred.height() * pred.width();
    if intensity.len() != n || dist.height() != pred.height() || dist.width() != pred.width() {
        return Err(Error::Shape("intensity or distance map does not match the label map".into()));
    }
    Ok(())
}

/// Forest-based false-positive filter. Without a forest (no components were
/// seen in training) every component is kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidFilter {
    pub forest: Option<RandomForest>,
}

impl FluidFilter {
    pub fn passthrough() -> Self {
        Self { forest: None }
    }

    pub fn train(examples: &[(Vec<f64>, bool)], config: ForestConfig) -> Result<Self> {
        if examples.is_empty() {
            return Ok(Self::passthrough());
        }
        let x: Vec<Vec<f64>> = examples.iter().map(|e| e.0.clone()).collect();
        let y: Vec<usize> = examples.iter().map(|e| e.1 as usize).collect();
        Ok(Self { forest: Some(RandomForest::fit(&x, &y, 2, config)?) })
    }

    pub fn keeps(&self, features: &[f64]) -> bool {
        self.forest.as_ref().map_or(true, |f| f.predict_proba(features)[1] >= 0.5)
    }

    /// Relabels rejected components to their surrounding class. The result
    /// never contains fluid where the input had none.
    pub fn filter(&self, pred: &LabelMap, intensity: &[f32], dist: &RelativeDistanceMap) -> Result<LabelMap> {
        check_dims(pred, intensity, dist)?;
        let mut out = pred.clone();
        for c in fluid_components(pred) {
            if !self.keeps(&c.features(pred, intensity, dist)) {
                let fill = c.surrounding_class(pred);
                c.pixels.iter().for_each(|&p| out.labels_mut()[p] = fill);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ClassScheme;

    fn map(rows: &[&str]) -> LabelMap {
        let w = rows[0].len();
        let labels = rows.iter().flat_map(|r| r.bytes().map(|b| b - b'0')).collect();
        LabelMap::new(rows.len(), w, ClassScheme::Stage2, labels).unwrap()
    }

    #[test]
    fn components_are_four_connected() {
        let m = map(&["7700", "0070", "0077", "7000"]);
        let cs = fluid_components(&m);
        assert_eq!(cs.len(), 3);
        assert_eq!(cs[0].pixels, vec![0, 1]);
        assert_eq!(cs[1].pixels, vec![6, 10, 11]);
        assert_eq!(cs[2].pixels, vec![12]);
    }

    #[test]
    fn hull_of_square_and_l_shape() {
        assert_eq!(hull_area(&[0, 1, 4, 5], 4), 4.0);
        assert_eq!(hull_area(&[0], 4), 1.0);
        // L of three pixels: hull cuts off half of the missing corner
        assert_eq!(hull_area(&[0, 4, 5], 4), 3.5);
    }

    #[test]
    fn overlap_rule() {
        let pred = map(&["7777", "0000"]);
        let c = &fluid_components(&pred)[0];
        assert!(c.is_true_positive(&pred));
        assert!(c.is_true_positive(&map(&["7700", "0000"])));
        assert!(!c.is_true_positive(&map(&["7000", "0000"])));
    }

    #[test]
    fn features_are_finite_and_named() {
        let m = map(&["1111", "1772", "2772", "3333"]);
        let d = RelativeDistanceMap::constant(4, 4, 0.5);
        let f = fluid_components(&m)[0].features(&m, &[0.2; 16], &d);
        assert_eq!(f.len(), FEATURE_NAMES.len());
        assert_eq!(f[0], 4.0);
        assert!((f[1] - 0.2).abs() < 1e-7 && f[2] < 1e-7);
        assert_eq!((f[4], f[5]), (1.0, 1.0));
        assert!(f.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejected_component_takes_majority_neighbour() {
        let m = map(&["1111", "1772", "2772", "2222"]);
        let c = &fluid_components(&m)[0];
        assert_eq!(c.surrounding_class(&m), 2);
        let reject = FluidFilter::train(
            &[(c.features(&m, &[0.0; 16], &RelativeDistanceMap::constant(4, 4, 0.5)), false)],
            ForestConfig { n_trees: 3, ..Default::default() },
        )
        .unwrap();
        let out = reject.filter(&m, &[0.0; 16], &RelativeDistanceMap::constant(4, 4, 0.5)).unwrap();
        assert!(!out.contains(class::FLUID));
        assert_eq!(out.labels()[5], 2);
    }

    #[test]
    fn no_fluid_means_unchanged() {
        let m = map(&["1111", "2222"]);
        let f = FluidFilter::passthrough();
        assert_eq!(f.filter(&m, &[0.0; 8], &RelativeDistanceMap::constant(2, 4, 0.5)).unwrap(), m);
    }
}
