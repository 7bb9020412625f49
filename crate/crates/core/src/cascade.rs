//! Cascade inference: stage 1 finds the retina, its surfaces give the
//! relative distance map, stage 2 labels layers and fluid from the B-scans
//! plus that map, and the forest filter prunes fluid components.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{ClassScheme, LabelMap, LabeledVolume, OctVolume, SurfacePair};
use crate::distmap::{compute_distance_map, extract_surfaces, RelativeDistanceMap};
use crate::error::{Error, Result};
use crate::fluid::FluidFilter;
use crate::forest::ForestConfig;
use crate::lfunet::{LfUNet, NetworkConfig};
use crate::losses::LossConfig;
use crate::metrics::{BscanScores, EvalReport};
use crate::tensor::Tensor;
use crate::train::TrainConfig;

/// Distance channel used when stage 1 yields no usable surfaces.
pub const FALLBACK_DISTANCE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CascadeConfig {
    pub stage1: NetworkConfig,
    pub stage2: NetworkConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub forest: ForestConfig,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            stage1: NetworkConfig { in_channels: 3, num_classes: 3, ..NetworkConfig::default() },
            stage2: NetworkConfig { in_channels: 4, num_classes: 8, ..NetworkConfig::default() },
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            forest: ForestConfig::default(),
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        self.stage1.validate()?;
        self.stage2.validate()?;
        if (self.stage1.in_channels, self.stage1.num_classes) != (3, 3) {
            return Err(Error::Config("stage 1 takes 3 channels and predicts 3 classes".into()));
        }
        if (self.stage2.in_channels, self.stage2.num_classes) != (4, 8) {
            return Err(Error::Config("stage 2 takes 4 channels and predicts 8 classes".into()));
        }
        self.loss.validate()?;
        self.train.validate()
    }
}

/// Everything needed to run the cascade.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub config: CascadeConfig,
    pub stage1: LfUNet<f32>,
    pub stage2: LfUNet<f32>,
    pub filter: FluidFilter,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BscanPrediction {
    pub stage1: LabelMap,
    /// `None` when extraction failed and the constant fallback map was used.
    pub surfaces: Option<SurfacePair>,
    pub distance_map: RelativeDistanceMap,
    pub prefilter: LabelMap,
    pub labels: LabelMap,
}

impl BscanPrediction {
    pub fn used_fallback(&self) -> bool {
        self.surfaces.is_none()
    }
}

pub fn argmax_labels(probs: &Tensor<f32>) -> Result<LabelMap> {
    let scheme = ClassScheme::for_num_classes(probs.channels())?;
    LabelMap::new(probs.height(), probs.width(), scheme, probs.argmax_channels())
}

/// Distance map from a stage-1 prediction, or the constant fallback.
pub fn stage1_distance_map(stage1: &LabelMap) -> Result<(RelativeDistanceMap, Option<SurfacePair>)> {
    let (h, w) = (stage1.height(), stage1.width());
    match extract_surfaces(stage1).and_then(|s| compute_distance_map(&s, h, w).map(|m| (m, s))) {
        Ok((map, s)) => Ok((map, Some(s))),
        Err(Error::SurfaceExtraction | Error::DegenerateSurface { .. }) => {
            Ok((RelativeDistanceMap::constant(h, w, FALLBACK_DISTANCE), None))
        }
        Err(e) => Err(e),
    }
}

/// Stage 1 and stage 2 without the fluid filter.
pub fn predict_unfiltered(
    stage1: &LfUNet<f32>,
    stage2: &LfUNet<f32>,
    volume: &OctVolume,
    index: usize,
) -> Result<(LabelMap, Option<SurfacePair>, RelativeDistanceMap, LabelMap)> {
    let stack = volume.extract_bscan_stack(index)?;
    let s1 = argmax_labels(&stage1.predict(stack.tensor())?)?;
    let (map, surfaces) = stage1_distance_map(&s1)?;
    let input = stack.with_distance_map(&map)?;
    let s2 = argmax_labels(&stage2.predict(input.tensor())?)?;
    Ok((s1, surfaces, map, s2))
}

pub fn predict_bscan(bundle: &ModelBundle, volume: &OctVolume, index: usize) -> Result<BscanPrediction> {
    let (stage1, surfaces, distance_map, prefilter) =
        predict_unfiltered(&bundle.stage1, &bundle.stage2, volume, index)?;
    let labels = bundle.filter.filter(&prefilter, volume.bscan(index), &distance_map)?;
    Ok(BscanPrediction { stage1, surfaces, distance_map, prefilter, labels })
}

pub fn cascade_infer(volume: &OctVolume, bundle: &ModelBundle) -> Result<Vec<BscanPrediction>> {
    (0..volume.num_bscans()).map(|i| predict_bscan(bundle, volume, i)).collect()
}

/// Scores cascade predictions against the ground truth of each volume.
pub fn evaluate_cascade(bundle: &ModelBundle, volumes: &[LabeledVolume]) -> Result<EvalReport> {
    let mut rows = Vec::new();
    for v in volumes {
        for (i, p) in cascade_infer(&v.volume, bundle)?.iter().enumerate() {
            rows.push(BscanScores::score(&v.id, i, &p.prefilter, &p.labels, &v.labels[i])?);
        }
    }
    Ok(EvalReport::from_rows(rows))
}

/// Input layout of a single-stage network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    /// The B-scan alone.
    Single,
    /// The B-scan with its two neighbours.
    Adjacent,
}

impl InputMode {
    pub fn channels(self) -> usize {
        match self {
            InputMode::Single => 1,
            InputMode::Adjacent => 3,
        }
    }

    pub fn stack(self, volume: &OctVolume, index: usize) -> Result<Tensor<f32>> {
        Ok(match self {
            InputMode::Single => volume.extract_single(index)?,
            InputMode::Adjacent => volume.extract_bscan_stack(index)?,
        }
        .into_tensor())
    }
}

/// One network mapping B-scans straight to the 8 classes, without prior.
#[derive(Clone, Debug)]
pub struct SingleStageModel {
    pub mode: InputMode,
    pub net: LfUNet<f32>,
}

impl SingleStageModel {
    pub fn predict(&self, volume: &OctVolume, index: usize) -> Result<LabelMap> {
        argmax_labels(&self.net.predict(&self.mode.stack(volume, index)?)?)
    }

    /// Report with identical pre- and post-filter predictions.
    pub fn evaluate(&self, volumes: &[LabeledVolume]) -> Result<EvalReport> {
        let mut rows = Vec::new();
        for v in volumes {
            for i in 0..v.volume.num_bscans() {
                let p = self.predict(&v.volume, i)?;
                rows.push(BscanScores::score(&v.id, i, &p, &p, &v.labels[i])?);
            }
        }
        Ok(EvalReport::from_rows(rows))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::stage1_class;
    use alloc::vec;

    #[test]
    fn empty_stage1_falls_back() {
        let s1 = LabelMap::filled(16, 16, ClassScheme::Stage1, stage1_class::ABOVE_ILM).unwrap();
        let (map, s) = stage1_distance_map(&s1).unwrap();
        assert!(s.is_none());
        assert!(map.values().iter().all(|&v| v == FALLBACK_DISTANCE));
    }

    #[test]
    fn band_gives_zero_at_ilm() {
        let mut labels = vec![0u8; 16 * 16];
        labels[4 * 16..10 * 16].fill(1);
        labels[10 * 16..].fill(2);
        let s1 = LabelMap::new(16, 16, ClassScheme::Stage1, labels).unwrap();
        let (map, s) = stage1_distance_map(&s1).unwrap();
        assert!(s.is_some());
        assert_eq!(map.at(4, 3), 0.0);
        assert_eq!(map.at(10, 3), 1.0);
    }

    #[test]
    fn default_config_is_consistent() {
        CascadeConfig::default().validate().unwrap();
        let mut c = CascadeConfig::default();
        c.stage2.in_channels = 3;
        assert!(c.validate().is_err());
    }
}
