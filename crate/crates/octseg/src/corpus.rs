//! Writing a phantom corpus to disk.

use std::fs;
use std::path::Path;

use octseg_core::data::SurfacePair;
use octseg_core::phantom::{generate_phantom_indexed, Phantom, PhantomConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::container::{write_atomic, write_volume};
use crate::error::{Error, IoContext, Result};
use crate::image::write_labels;
use crate::manifest::{bscan_file, Manifest, ManifestEntry};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn volume_id(index: usize) -> String {
    format!("vol{index:03}")
}

#[derive(Serialize)]
struct TruthRecord<'a> {
    bscan: usize,
    has_fluid: bool,
    surfaces: &'a [Vec<usize>],
    ilm_bm: SurfacePair,
}

fn write_phantom(dir: &Path, id: &str, p: &Phantom) -> Result<()> {
    write_volume(&dir.join(format!("{id}.octv")), &p.volume)?;
    let labels = dir.join(id).join("labels");
    for (i, b) in p.bscans.iter().enumerate() {
        write_labels(&labels.join(bscan_file(i)), &b.labels)?;
    }
    let truth: Vec<TruthRecord> = p
        .bscans
        .iter()
        .enumerate()
        .map(|(i, b)| TruthRecord {
            bscan: i,
            has_fluid: b.has_fluid(),
            surfaces: &b.surfaces.rows,
            ilm_bm: b.surface_pair(),
        })
        .collect();
    let mut json = serde_json::to_string_pretty(&truth).expect("truth serializes");
    json.push('\n');
    write_atomic(&dir.join(id).join("truth.json"), json.as_bytes())
}

/// Generates `num_volumes` phantoms under `dir` and writes the manifest.
/// Volume `i` is a pure function of `(config, i)`, so the corpus is
/// byte-identical across runs and across `--jobs` settings.
pub fn generate_corpus(config: &PhantomConfig, num_volumes: usize, dir: &Path, overwrite: bool) -> Result<Manifest> {
    config.validate()?;
    if dir.exists() {
        let non_empty = fs::read_dir(dir).at(dir)?.next().is_some();
        if non_empty && !overwrite {
            return Err(Error::Usage(format!("{} is not empty; pass --overwrite to replace it", dir.display())));
        }
        if non_empty {
            fs::remove_dir_all(dir).at(dir)?;
        }
    }
    fs::create_dir_all(dir).at(dir)?;
    (0..num_volumes).into_par_iter().try_for_each(|i| {
        let p = generate_phantom_indexed(config, i as u64)?;
        write_phantom(dir, &volume_id(i), &p)
    })?;
    let manifest = Manifest {
        volumes: (0..num_volumes)
            .map(|i| {
                let id = volume_id(i);
                ManifestEntry {
                    patient_id: format!("patient{i:03}"),
                    volume: format!("{id}.octv").into(),
                    labels: Path::new(&id).join("labels"),
                    id,
                }
            })
            .collect(),
    };
    manifest.write(&dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
