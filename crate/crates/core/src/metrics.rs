//! Dice overlap and evaluation reports laid out like the usual table:
//! five layer regions, fluid before and after the forest filter.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{class, LabelMap};
use crate::error::{Error, Result};

/// Metric columns of an evaluation report.
pub const COLUMNS: [&str; 7] = ["ILM-NFL", "NFL-IPL", "IPL-OPL", "OPL-IOS", "IOS-BM", "Fluid", "RF-Fluid"];

/// `2|A∩B| / (|A| + |B|)`, and 1 when both masks are empty.
pub fn dice(pred: &[bool], truth: &[bool]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("masks of {} and {} pixels", pred.len(), truth.len())));
    }
    let (mut inter, mut a, mut b) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        inter += (p && t) as usize;
        a += p as usize;
        b += t as usize;
    }
    Ok(if a + b == 0 { 1.0 } else { 2.0 * inter as f64 / (a + b) as f64 })
}

pub fn class_dice(pred: &LabelMap, truth: &LabelMap, id: u8) -> Result<f64> {
    dice(&pred.mask(id), &truth.mask(id))
}

/// Per-B-scan scores. Fluid columns are `None` when the truth has no fluid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BscanScores {
    pub volume_id: String,
    pub bscan: usize,
    pub layers: [f64; 5],
    pub fluid: Option<f64>,
    pub rf_fluid: Option<f64>,
    /// Fluid pixels present after filtering but absent before.
    pub filter_violations: usize,
}

impl BscanScores {
    /// Scores one B-scan from the pre-filter and final predictions.
    pub fn score(
        volume_id: &str,
        bscan: usize,
        prefilter: &LabelMap,
        filtered: &LabelMap,
        truth: &LabelMap,
    ) -> Result<Self> {
        let mut layers = [0.0; 5];
        for (slot, id) in layers.iter_mut().zip(class::LAYERS) {
            *slot = class_dice(filtered, truth, id)?;
        }
        let has_fluid = truth.contains(class::FLUID);
        let fluid = has_fluid.then(|| class_dice(prefilter, truth, class::FLUID)).transpose()?;
        let rf_fluid = has_fluid.then(|| class_dice(filtered, truth, class::FLUID)).transpose()?;
        let filter_violations = prefilter
            .labels()
            .iter()
            .zip(filtered.labels())
            .filter(|(&a, &b)| b == class::FLUID && a != class::FLUID)
            .count();
        Ok(Self { volume_id: volume_id.into(), bscan, layers, fluid, rf_fluid, filter_violations })
    }

    pub fn column(&self, i: usize) -> Option<f64> {
        match i {
            0..=4 => Some(self.layers[i]),
            5 => self.fluid,
            6 => self.rf_fluid,
            _ => None,
        }
    }
}

/// Mean of each column over a set of B-scans; fluid columns average only the
/// B-scans whose truth contains fluid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub columns: Vec<String>,
    pub means: Vec<Option<f64>>,
    pub num_bscans: usize,
    pub fluid_bscans: usize,
    pub excluded_from_fluid: usize,
    pub filter_violations: usize,
}

impl Summary {
    pub fn of(rows: &[BscanScores]) -> Self {
        let means = (0..COLUMNS.len())
            .map(|i| {
                let vals: Vec<f64> = rows.iter().filter_map(|r| r.column(i)).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect();
        let fluid_bscans = rows.iter().filter(|r| r.fluid.is_some()).count();
        Self {
            columns: COLUMNS.iter().map(|c| String::from(*c)).collect(),
            means,
            num_bscans: rows.len(),
            fluid_bscans,
            excluded_from_fluid: rows.len() - fluid_bscans,
            filter_violations: rows.iter().map(|r| r.filter_violations).sum(),
        }
    }

    pub fn mean_layer_dice(&self) -> Option<f64> {
        let v: Vec<f64> = self.means[..5].iter().flatten().copied().collect();
        (v.len() == 5).then(|| v.iter().sum::<f64>() / 5.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeSummary {
    pub volume_id: String,
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<BscanScores>,
    pub volumes: Vec<VolumeSummary>,
    pub corpus: Summary,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<BscanScores>) -> Self {
        let mut ids: Vec<&str> = Vec::new();
        for r in &rows {
            if !ids.contains(&r.volume_id.as_str()) {
                ids.push(&r.volume_id);
            }
        }
        let volumes = ids
            .iter()
            .map(|id| {
                let sub: Vec<BscanScores> = rows.iter().filter(|r| r.volume_id == *id).cloned().collect();
                VolumeSummary { volume_id: String::from(*id), summary: Summary::of(&sub) }
            })
            .collect();
        let corpus = Summary::of(&rows);
        Self { rows, volumes, corpus }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ClassScheme;
    use alloc::vec;

    #[test]
    fn dice_cases() {
        let a = [true, true, false, false];
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &[false, false, true, true]).unwrap(), 0.0);
        assert_eq!(dice(&[false; 4], &[false; 4]).unwrap(), 1.0);
        assert!(dice(&a, &[true]).is_err());
        // 2x2 block vs. the block shifted one column right on a 2x4 grid
        let block = [true, true, false, false, true, true, false, false];
        let shifted = [false, true, true, false, false, true, true, false];
        assert_eq!(dice(&block, &shifted).unwrap(), 0.5);
    }

    #[test]
    fn fluid_columns_skip_dry_bscans() {
        let dry = LabelMap::new(1, 8, ClassScheme::Stage2, vec![0, 1, 2, 3, 4, 5, 6, 6]).unwrap();
        let wet = LabelMap::new(1, 8, ClassScheme::Stage2, vec![0, 1, 2, 3, 4, 5, 6, 7]).unwrap();
        let r1 = BscanScores::score("v", 0, &dry, &dry, &dry).unwrap();
        let r2 = BscanScores::score("v", 1, &wet, &dry, &wet).unwrap();
        assert_eq!(r1.fluid, None);
        assert_eq!(r2.fluid, Some(1.0));
        assert_eq!(r2.rf_fluid, Some(0.0));
        let s = Summary::of(&[r1, r2]);
        assert_eq!(s.fluid_bscans, 1);
        assert_eq!(s.excluded_from_fluid, 1);
        assert_eq!(s.means[5], Some(1.0));
        assert_eq!(s.columns.len(), 7);
    }

    #[test]
    fn violations_counted() {
        let pre = LabelMap::new(1, 2, ClassScheme::Stage2, vec![0, 7]).unwrap();
        let post = LabelMap::new(1, 2, ClassScheme::Stage2, vec![7, 0]).unwrap();
        assert_eq!(BscanScores::score("v", 0, &pre, &post, &pre).unwrap().filter_violations, 1);
    }
}
