//! Corpus manifests: one entry per volume with its voxel file and the
//! directory of per-B-scan label PNGs, paths relative to the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use octseg_core::data::{ClassScheme, LabeledVolume};
use serde::{Deserialize, Serialize};

use crate::container::{read_volume, write_atomic};
use crate::error::{Error, IoContext, Result};
use crate::image::read_labels;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub patient_id: String,
    pub volume: PathBuf,
    pub labels: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub volumes: Vec<ManifestEntry>,
}

pub fn bscan_file(index: usize) -> String {
    format!("bscan_{index:03}.png")
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Corrupt { path: path.into(), msg: format!("manifest at {}: {}", e.path(), e.inner()) })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    fn base(path: &Path) -> &Path {
        path.parent().unwrap_or(Path::new("."))
    }

    /// Loads every volume and its ground-truth labels.
    pub fn load(&self, manifest_path: &Path) -> Result<Vec<LabeledVolume>> {
        let base = Self::base(manifest_path);
        self.volumes.iter().map(|e| load_entry(base, e)).collect()
    }
}

pub fn load_entry(base: &Path, e: &ManifestEntry) -> Result<LabeledVolume> {
    let volume = read_volume(&base.join(&e.volume))?;
    let dir = base.join(&e.labels);
    let labels = (0..volume.num_bscans())
        .map(|i| read_labels(&dir.join(bscan_file(i)), ClassScheme::Stage2))
        .collect::<Result<Vec<_>>>()?;
    LabeledVolume::new(e.id.clone(), volume, labels).map_err(|err| Error::Corrupt { path: dir, msg: err.to_string() })
}
