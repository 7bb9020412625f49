//! Volumes, class schemes, label maps and surfaces.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::distmap::RelativeDistanceMap;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Minimum B-scan height and width.
pub const MIN_DIM: usize = 16;

/// Stage-2 class ids.
pub mod class {
    pub const ABOVE_ILM: u8 = 0;
    pub const ILM_NFL: u8 = 1;
    pub const NFL_IPL: u8 = 2;
    pub const IPL_OPL: u8 = 3;
    pub const OPL_IOS: u8 = 4;
    pub const IOS_BM: u8 = 5;
    pub const BELOW_BM: u8 = 6;
    pub const FLUID: u8 = 7;

    /// The five layer regions, top to bottom.
    pub const LAYERS: [u8; 5] = [ILM_NFL, NFL_IPL, IPL_OPL, OPL_IOS, IOS_BM];
}

/// Stage-1 class ids.
pub mod stage1_class {
    pub const ABOVE_ILM: u8 = 0;
    pub const RETINA: u8 = 1;
    pub const BELOW_BM: u8 = 2;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassScheme {
    Stage1,
    Stage2,
}

const STAGE1_CLASSES: [(u8, &str); 3] = [(0, "above-ILM"), (1, "retina"), (2, "below-BM")];
const STAGE2_CLASSES: [(u8, &str); 8] = [
    (0, "background-above-ILM"),
    (1, "ILM-NFL"),
    (2, "NFL-IPL"),
    (3, "IPL-OPL"),
    (4, "OPL-IOS"),
    (5, "IOS-BM"),
    (6, "background-below-BM"),
    (7, "fluid"),
];

impl ClassScheme {
    pub fn classes(self) -> &'static [(u8, &'static str)] {
        match self {
            ClassScheme::Stage1 => &STAGE1_CLASSES,
            ClassScheme::Stage2 => &STAGE2_CLASSES,
        }
    }

    pub fn num_classes(self) -> usize {
        self.classes().len()
    }

    pub fn for_num_classes(n: usize) -> Result<Self> {
        match n {
            3 => Ok(ClassScheme::Stage1),
            8 => Ok(ClassScheme::Stage2),
            _ => Err(Error::Config(format!("no class scheme with {n} classes"))),
        }
    }

    pub fn label(self, id: u8) -> Option<&'static str> {
        self.classes().get(id as usize).map(|(_, l)| *l)
    }

    /// Classes inside the retina (between ILM and BM), fluid included.
    pub fn is_retina(self, id: u8) -> bool {
        match self {
            ClassScheme::Stage1 => id == stage1_class::RETINA,
            ClassScheme::Stage2 => matches!(id, 1..=5 | 7),
        }
    }
}

/// A stack of B-scans, intensities in `[0, 1]`, stored `(bscan, row, col)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OctVolume {
    num_bscans: usize,
    height: usize,
    width: usize,
    voxels: Vec<f32>,
    /// (axial, lateral, inter-B-scan) spacing in micrometers; metadata only.
    pub spacing_um: [f64; 3],
}

impl OctVolume {
    pub fn new(num_bscans: usize, height: usize, width: usize, voxels: Vec<f32>, spacing_um: [f64; 3]) -> Result<Self> {
        if height < MIN_DIM || width < MIN_DIM {
            return Err(Error::Shape(format!("B-scans must be at least {MIN_DIM}x{MIN_DIM}, got {height}x{width}")));
        }
        if voxels.len() != num_bscans * height * width {
            return Err(Error::Shape(format!("{} voxels for {num_bscans}x{height}x{width}", voxels.len())));
        }
        if let Some(i) = voxels.iter().position(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
            return Err(Error::InvalidData(format!("voxel {i} = {} is outside [0, 1]", voxels[i])));
        }
        Ok(Self { num_bscans, height, width, voxels, spacing_um })
    }

    pub fn num_bscans(&self) -> usize {
        self.num_bscans
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.num_bscans, self.height, self.width]
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn bscan(&self, index: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.voxels[index * n..(index + 1) * n]
    }

    /// `[prev, current, next]` with edge replication at the volume ends.
    pub fn extract_bscan_stack(&self, index: usize) -> Result<BscanStack> {
        self.check_index(index)?;
        let prev = index.saturating_sub(1);
        let next = (index + 1).min(self.num_bscans - 1);
        let mut data = Vec::with_capacity(3 * self.height * self.width);
        for i in [prev, index, next] {
            data.extend_from_slice(self.bscan(i));
        }
        BscanStack::new(Tensor::from_vec(3, self.height, self.width, data)?)
    }

    /// The B-scan alone as a one-channel stack.
    pub fn extract_single(&self, index: usize) -> Result<BscanStack> {
        self.check_index(index)?;
        BscanStack::new(Tensor::from_vec(1, self.height, self.width, self.bscan(index).to_vec())?)
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.num_bscans {
            return Err(Error::Index { index, len: self.num_bscans });
        }
        Ok(())
    }
}

/// Network input: `[prev, current, next, (distance map)]` or a single B-scan.
#[derive(Clone, Debug, PartialEq)]
pub struct BscanStack {
    tensor: Tensor<f32>,
}

impl BscanStack {
    pub fn new(tensor: Tensor<f32>) -> Result<Self> {
        if ![1, 3, 4].contains(&tensor.channels()) {
            return Err(Error::Shape(format!("B-scan stacks have 1, 3 or 4 channels, got {}", tensor.channels())));
        }
        Ok(Self { tensor })
    }

    /// Appends the distance map as the fourth channel.
    pub fn with_distance_map(&self, map: &RelativeDistanceMap) -> Result<Self> {
        if self.tensor.channels() != 3 {
            return Err(Error::Shape("distance map goes after exactly 3 B-scan channels".into()));
        }
        if (map.height(), map.width()) != (self.tensor.height(), self.tensor.width()) {
            return Err(Error::Shape("distance map dims differ from the B-scans".into()));
        }
        let dm = Tensor::from_vec(1, map.height(), map.width(), map.values().iter().map(|&v| v as f32).collect())?;
        Self::new(Tensor::concat(&[&self.tensor, &dm]))
    }

    pub fn channels(&self) -> usize {
        self.tensor.channels()
    }

    pub fn height(&self) -> usize {
        self.tensor.height()
    }

    pub fn width(&self) -> usize {
        self.tensor.width()
    }

    /// The B-scan being segmented (channel 1 of a 3/4-channel stack).
    pub fn center(&self) -> &[f32] {
        let c = if self.tensor.channels() == 1 { 0 } else { 1 };
        self.tensor.plane(c)
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.tensor
    }
}

/// Per-pixel class ids under a [`ClassScheme`], row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    scheme: ClassScheme,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, scheme: ClassScheme, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::Shape(format!("{} labels for {height}x{width}", labels.len())));
        }
        let n = scheme.num_classes() as u8;
        if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
            return Err(Error::InvalidData(format!("class id {bad} is not in the {scheme:?} scheme")));
        }
        Ok(Self { height, width, scheme, labels })
    }

    pub fn filled(height: usize, width: usize, scheme: ClassScheme, id: u8) -> Result<Self> {
        Self::new(height, width, scheme, vec![id; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn scheme(&self) -> ClassScheme {
        self.scheme
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn mask(&self, id: u8) -> Vec<bool> {
        self.labels.iter().map(|&l| l == id).collect()
    }

    pub fn contains(&self, id: u8) -> bool {
        self.labels.contains(&id)
    }

    /// Collapses a stage-2 map onto the stage-1 partition; fluid counts as retina.
    pub fn to_stage1(&self) -> Result<Self> {
        if self.scheme != ClassScheme::Stage2 {
            return Err(Error::InvalidData("only stage-2 maps can be collapsed".into()));
        }
        let labels = self
            .labels
            .iter()
            .map(|&l| match l {
                class::ABOVE_ILM => stage1_class::ABOVE_ILM,
                class::BELOW_BM => stage1_class::BELOW_BM,
                _ => stage1_class::RETINA,
            })
            .collect();
        Self::new(self.height, self.width, ClassScheme::Stage1, labels)
    }

    /// Fluid-free columns whose labels decrease somewhere going down.
    /// Ground truth never has any; predictions may.
    pub fn column_order_violations(&self) -> Vec<usize> {
        let fluid = match self.scheme {
            ClassScheme::Stage2 => Some(class::FLUID),
            ClassScheme::Stage1 => None,
        };
        (0..self.width)
            .filter(|&x| {
                let col: Vec<u8> = (0..self.height).map(|y| self.at(y, x)).collect();
                if fluid.is_some_and(|f| col.contains(&f)) {
                    return false;
                }
                col.windows(2).any(|w| w[1] < w[0])
            })
            .collect()
    }
}

/// Per-column ILM (`y1`) and BM (`y2`) rows; `0 ≤ y1 < y2 ≤ H−1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePair {
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
}

impl SurfacePair {
    pub fn new(y1: Vec<f64>, y2: Vec<f64>, height: usize) -> Result<Self> {
        if y1.len() != y2.len() {
            return Err(Error::Shape("ILM and BM have different widths".into()));
        }
        let max = (height - 1) as f64;
        for (x, (&a, &b)) in y1.iter().zip(&y2).enumerate() {
            if !(a.is_finite() && b.is_finite() && 0.0 <= a && b <= max) {
                return Err(Error::InvalidData(format!("surface rows out of range at column {x}")));
            }
            if a >= b {
                return Err(Error::DegenerateSurface { column: x });
            }
        }
        Ok(Self { y1, y2 })
    }

    pub fn width(&self) -> usize {
        self.y1.len()
    }
}

/// The six boundaries of the layer partition, each a per-column row:
/// ILM, posterior NFL, posterior IPL, posterior OPL, IS/OS, BM.
///
/// Surface `k` sits at the first row of class `k + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSurfaces {
    pub rows: Vec<Vec<usize>>,
}

impl LayerSurfaces {
    pub const COUNT: usize = 6;

    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn surface_pair(&self, height: usize) -> Result<SurfacePair> {
        let f = |v: &Vec<usize>| v.iter().map(|&r| r as f64).collect();
        SurfacePair::new(f(&self.rows[0]), f(&self.rows[5]), height)
    }
}

/// Recovers the six boundaries from a stage-2 label map.
///
/// Fluid pixels are skipped; a layer fully hidden by fluid in a column takes
/// the first row below the fluid. A layer missing from a fluid-free column is
/// an error.
pub fn labelmap_to_surfaces(labels: &LabelMap) -> Result<LayerSurfaces> {
    if labels.scheme() != ClassScheme::Stage2 {
        return Err(Error::InvalidData("surfaces need a stage-2 label map".into()));
    }
    let (h, w) = (labels.height(), labels.width());
    let mut rows = vec![vec![0usize; w]; LayerSurfaces::COUNT];
    for x in 0..w {
        let col: Vec<u8> = (0..h).map(|y| labels.at(y, x)).collect();
        let has_fluid = col.contains(&class::FLUID);
        for k in 0..LayerSurfaces::COUNT {
            let below = k as u8 + 1;
            if !has_fluid && !col.contains(&below) {
                return Err(Error::MissingLayer { column: x, class: below });
            }
            let row =
                col.iter().position(|&l| if k == 0 { l != class::ABOVE_ILM } else { l != class::FLUID && l > k as u8 });
            rows[k][x] = row.ok_or(Error::MissingLayer { column: x, class: below })?;
        }
    }
    Ok(LayerSurfaces { rows })
}

/// A volume with its 8-class ground truth, one label map per B-scan.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledVolume {
    pub id: String,
    pub volume: OctVolume,
    pub labels: Vec<LabelMap>,
}

impl LabeledVolume {
    pub fn new(id: impl Into<String>, volume: OctVolume, labels: Vec<LabelMap>) -> Result<Self> {
        if labels.len() != volume.num_bscans() {
            return Err(Error::InvalidData(format!("{} label maps for {} B-scans", labels.len(), volume.num_bscans())));
        }
        for l in &labels {
            if (l.height(), l.width()) != (volume.height(), volume.width()) || l.scheme() != ClassScheme::Stage2 {
                return Err(Error::InvalidData("label maps must be 8-class and match the volume dims".into()));
            }
        }
        Ok(Self { id: id.into(), volume, labels })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn volume(n: usize) -> OctVolume {
        let hw = MIN_DIM * MIN_DIM;
        let vox = (0..n * hw).map(|i| (i / hw) as f32 / n as f32).collect();
        OctVolume::new(n, MIN_DIM, MIN_DIM, vox, [1.0; 3]).unwrap()
    }

    #[test]
    fn stack_interior_and_edges() {
        let v = volume(3);
        let s = v.extract_bscan_stack(1).unwrap();
        let t = s.tensor();
        assert_eq!(t.plane(0), v.bscan(0));
        assert_eq!(t.plane(1), v.bscan(1));
        assert_eq!(t.plane(2), v.bscan(2));
        let first = v.extract_bscan_stack(0).unwrap();
        assert_eq!(first.tensor().plane(0), v.bscan(0));
        assert_eq!(first.tensor().plane(1), v.bscan(0));
        assert_eq!(first.tensor().plane(2), v.bscan(1));
        let last = v.extract_bscan_stack(2).unwrap();
        assert_eq!(last.tensor().plane(0), v.bscan(1));
        assert_eq!(last.tensor().plane(2), v.bscan(2));
        assert_eq!(v.extract_bscan_stack(3), Err(Error::Index { index: 3, len: 3 }));
    }

    #[test]
    fn single_bscan_volume_replicates_both_neighbours() {
        let v = volume(1);
        let s = v.extract_bscan_stack(0).unwrap();
        for c in 0..3 {
            assert_eq!(s.tensor().plane(c), v.bscan(0));
        }
    }

    #[test]
    fn volume_rejects_out_of_range_intensity() {
        let mut vox = vec![0.5f32; 256];
        vox[7] = 1.5;
        assert!(matches!(OctVolume::new(1, 16, 16, vox, [1.0; 3]), Err(Error::InvalidData(_))));
        assert!(matches!(OctVolume::new(1, 8, 16, vec![0.0; 128], [1.0; 3]), Err(Error::Shape(_))));
    }

    fn flat_map(tops: [usize; 6], h: usize, w: usize) -> LabelMap {
        let mut labels = vec![0u8; h * w];
        for y in 0..h {
            let id = tops.iter().filter(|&&t| y >= t).count() as u8;
            for x in 0..w {
                labels[y * w + x] = id;
            }
        }
        LabelMap::new(h, w, ClassScheme::Stage2, labels).unwrap()
    }

    #[test]
    fn flat_layers_give_flat_surfaces() {
        let m = flat_map([10, 20, 30, 40, 50, 60], 70, 16);
        let s = labelmap_to_surfaces(&m).unwrap();
        for (k, want) in [10, 20, 30, 40, 50, 60].into_iter().enumerate() {
            assert!(s.rows[k].iter().all(|&r| r == want));
        }
        assert!(m.column_order_violations().is_empty());
    }

    #[test]
    fn background_only_map_is_missing_layers() {
        let m = LabelMap::filled(20, 16, ClassScheme::Stage2, 0).unwrap();
        assert_eq!(labelmap_to_surfaces(&m), Err(Error::MissingLayer { column: 0, class: 1 }));
    }

    #[test]
    fn fluid_hiding_a_layer_is_tolerated() {
        let mut m = flat_map([10, 20, 30, 40, 50, 60], 70, 16);
        for y in 18..33 {
            m.labels_mut()[y * 16 + 4] = class::FLUID;
        }
        let s = labelmap_to_surfaces(&m).unwrap();
        assert_eq!(s.rows[1][4], 33);
        assert_eq!(s.rows[2][4], 33);
        assert_eq!(s.rows[3][4], 40);
        assert_eq!(s.rows[1][3], 20);
    }

    #[test]
    fn stage1_collapse() {
        let m = LabelMap::new(16, 1, ClassScheme::Stage2, (0..16).map(|i| (i / 2) as u8).collect()).unwrap();
        let s = m.to_stage1().unwrap();
        assert_eq!(s.labels(), &[0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 1, 1]);
    }

    #[test]
    fn label_ids_checked_against_scheme() {
        assert!(LabelMap::new(1, 2, ClassScheme::Stage1, vec![0, 3]).is_err());
        assert!(LabelMap::new(1, 2, ClassScheme::Stage2, vec![0, 7]).is_ok());
    }

    #[test]
    fn order_violations_reported_not_rejected() {
        let m = LabelMap::new(4, 2, ClassScheme::Stage2, vec![0, 0, 1, 7, 0, 1, 6, 6]).unwrap();
        assert_eq!(m.column_order_violations(), [0]);
    }
}
