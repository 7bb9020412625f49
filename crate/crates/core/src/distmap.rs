//! ILM/BM extraction from the stage-1 partition and the relative distance prior.

use alloc::vec::Vec;

use crate::data::{stage1_class, ClassScheme, LabelMap, SurfacePair};
use crate::error::{Error, Result};

/// Clip range of the distance map.
pub const CLIP_MIN: f64 = -2.0;
pub const CLIP_MAX: f64 = 3.0;

/// Columns with a shorter retina run are treated as stage-1 failures.
pub const MIN_RETINA_RUN: usize = 3;

/// Normalised retinal depth: 0 on ILM, 1 on BM, negative above, >1 below.
#[derive(Clone, Debug, PartialEq)]
pub struct RelativeDistanceMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl RelativeDistanceMap {
    /// A constant map, used when surfaces cannot be extracted.
    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Self { height, width, values: alloc::vec![value; height * width] }
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

/// `(y − y1) / (y2 − y1)`, unclipped.
#[inline]
pub fn relative_distance(y: f64, y1: f64, y2: f64) -> f64 {
    (y - y1) / (y2 - y1)
}

/// ILM = first retina row, BM = last retina row + 1 (clamped to `H − 1`).
/// Columns without a usable retina run are linearly interpolated from the
/// nearest valid columns and held constant past the ends.
pub fn extract_surfaces(stage1: &LabelMap) -> Result<SurfacePair> {
    if stage1.scheme() != ClassScheme::Stage1 {
        return Err(Error::InvalidData("surface extraction needs a stage-1 label map".into()));
    }
    let (h, w) = (stage1.height(), stage1.width());
    let mut found: Vec<Option<(f64, f64)>> = Vec::with_capacity(w);
    for x in 0..w {
        let mut rows = (0..h).filter(|&y| stage1.at(y, x) == stage1_class::RETINA);
        let entry = rows.next().and_then(|top| {
            let bottom = rows.next_back().unwrap_or(top);
            let y2 = (bottom + 1).min(h - 1);
            (bottom + 1 - top >= MIN_RETINA_RUN && y2 > top).then_some((top as f64, y2 as f64))
        });
        found.push(entry);
    }
    let valid: Vec<usize> = (0..w).filter(|&x| found[x].is_some()).collect();
    if valid.is_empty() {
        return Err(Error::SurfaceExtraction);
    }
    let mut y1 = Vec::with_capacity(w);
    let mut y2 = Vec::with_capacity(w);
    for x in 0..w {
        let (a, b) = match found[x] {
            Some(v) => v,
            None => {
                let right = valid.partition_point(|&v| v < x);
                match (right.checked_sub(1).map(|i| valid[i]), valid.get(right).copied()) {
                    (Some(l), Some(r)) => {
                        let t = (x - l) as f64 / (r - l) as f64;
                        let (la, lb) = found[l].expect("valid");
                        let (ra, rb) = found[r].expect("valid");
                        (la + t * (ra - la), lb + t * (rb - lb))
                    }
                    (Some(l), None) => found[l].expect("valid"),
                    (None, Some(r)) => found[r].expect("valid"),
                    (None, None) => unreachable!("at least one valid column"),
                }
            }
        };
        y1.push(a);
        y2.push(b);
    }
    SurfacePair::new(y1, y2, h)
}

/// Per-pixel relative distance, clipped to `[CLIP_MIN, CLIP_MAX]`.
pub fn compute_distance_map(surfaces: &SurfacePair, height: usize, width: usize) -> Result<RelativeDistanceMap> {
    if surfaces.width() != width {
        return Err(Error::Shape(alloc::format!("surfaces cover {} columns, map has {width}", surfaces.width())));
    }
    if let Some(column) = (0..width).find(|&x| surfaces.y1[x] >= surfaces.y2[x]) {
        return Err(Error::DegenerateSurface { column });
    }
    let mut values = Vec::with_capacity(height * width);
    for y in 0..height {
        let yf = y as f64;
        values.extend(
            surfaces.y1.iter().zip(&surfaces.y2).map(|(&a, &b)| relative_distance(yf, a, b).clamp(CLIP_MIN, CLIP_MAX)),
        );
    }
    Ok(RelativeDistanceMap { height, width, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn stage1_from_runs(h: usize, runs: &[Option<(usize, usize)>]) -> LabelMap {
        let w = runs.len();
        let mut labels = vec![0u8; h * w];
        for (x, run) in runs.iter().enumerate() {
            for y in 0..h {
                labels[y * w + x] = match run {
                    Some((a, b)) if y >= *a && y < *b => 1,
                    Some((_, b)) if y >= *b => 2,
                    _ => 0,
                };
            }
        }
        LabelMap::new(h, w, ClassScheme::Stage1, labels).unwrap()
    }

    #[test]
    fn constant_retina_band() {
        let m = stage1_from_runs(80, &[Some((10, 60)); 16]);
        let s = extract_surfaces(&m).unwrap();
        assert!(s.y1.iter().all(|&v| v == 10.0));
        assert!(s.y2.iter().all(|&v| v == 60.0));
    }

    #[test]
    fn failed_column_is_interpolated() {
        let m = stage1_from_runs(80, &[Some((10, 60)), None, Some((12, 64))]);
        let s = extract_surfaces(&m).unwrap();
        assert_eq!((s.y1[1], s.y2[1]), (11.0, 62.0));
    }

    #[test]
    fn thin_and_edge_columns_are_repaired() {
        let m = stage1_from_runs(80, &[None, Some((20, 22)), Some((10, 60)), None]);
        let s = extract_surfaces(&m).unwrap();
        assert_eq!((s.y1[0], s.y2[0]), (10.0, 60.0));
        assert_eq!((s.y1[1], s.y2[1]), (10.0, 60.0));
        assert_eq!((s.y1[3], s.y2[3]), (10.0, 60.0));
    }

    #[test]
    fn no_retina_anywhere_is_an_error() {
        let m = LabelMap::filled(20, 16, ClassScheme::Stage1, 0).unwrap();
        assert_eq!(extract_surfaces(&m), Err(Error::SurfaceExtraction));
    }

    #[test]
    fn formula_values() {
        let s = SurfacePair::new(vec![10.0; 4], vec![60.0; 4], 80).unwrap();
        let d = compute_distance_map(&s, 80, 4).unwrap();
        assert_eq!(d.at(10, 0), 0.0);
        assert_eq!(d.at(60, 0), 1.0);
        assert_eq!(d.at(35, 0), 0.5);
        assert!((d.at(0, 0) + 0.2).abs() < 1e-15);
        assert_eq!(d.at(79, 0), (79.0 - 10.0) / 50.0);
    }

    #[test]
    fn clipping_bounds() {
        let s = SurfacePair::new(vec![40.0], vec![42.0], 100).unwrap();
        let d = compute_distance_map(&s, 100, 1).unwrap();
        assert_eq!(d.at(0, 0), CLIP_MIN);
        assert_eq!(d.at(99, 0), CLIP_MAX);
    }

    #[test]
    fn degenerate_surfaces_rejected() {
        let s = SurfacePair { y1: vec![5.0, 9.0], y2: vec![8.0, 9.0] };
        assert_eq!(compute_distance_map(&s, 20, 2), Err(Error::DegenerateSurface { column: 1 }));
        assert!(matches!(SurfacePair::new(vec![5.0], vec![3.0], 20), Err(Error::DegenerateSurface { column: 0 })));
    }
}
