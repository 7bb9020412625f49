//! The work behind each CLI subcommand, callable without a process.

use std::path::{Path, PathBuf};

use octseg_core::cascade::{predict_bscan, BscanPrediction, ModelBundle};
use octseg_core::cv::{cross_validate, CvReport};
use octseg_core::data::{ClassScheme, LabeledVolume, OctVolume};
use octseg_core::metrics::{BscanScores, EvalReport};
use octseg_core::train::{train_cascade, CascadeOutcome, EpochRecord, Stage};
use rayon::prelude::*;
use serde::Serialize;

use crate::bundle::{load_bundle, save_bundle};
use crate::config::RunConfig;
use crate::container::{read_volume, write_atomic};
use crate::corpus::generate_corpus;
use crate::error::{Error, Result};
use crate::image::{distance_png, overlay_png, read_labels, write_labels};
use crate::manifest::{bscan_file, load_entry, Manifest};
use crate::report::{metrics_csv, write_cv_report, write_eval_report};

pub const CONFIG_SNAPSHOT: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const BUNDLE_DIR: &str = "bundle";
pub const PREFILTER_DIR: &str = "prefilter";

fn progress(stage: Stage, r: &EpochRecord) {
    eprintln!("{stage:?} epoch {:>3}  loss {:.5}  accuracy {:.5}", r.epoch, r.loss, r.accuracy);
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

pub fn phantom_gen(cfg: &RunConfig, out: &Path, overwrite: bool) -> Result<Manifest> {
    let m = generate_corpus(&cfg.phantom_config(), cfg.phantom.num_volumes, out, overwrite)?;
    eprintln!("wrote {} volumes to {}", m.volumes.len(), out.display());
    Ok(m)
}

#[derive(Serialize)]
struct TrainSummary {
    volumes: usize,
    stage1_epochs: usize,
    stage1_best_epoch: usize,
    stage2_epochs: usize,
    stage2_best_epoch: usize,
    stage1_fallbacks: usize,
    filter_components: usize,
    filter_true_positives: usize,
}

/// Trains a cascade on every volume of the manifest. The run directory gets
/// the config snapshot, per-epoch metrics, a summary and the bundle.
pub fn train(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<CascadeOutcome> {
    let volumes = Manifest::read(manifest)?.load(manifest)?;
    cfg.save(&out.join(CONFIG_SNAPSHOT))?;
    let mut records = Vec::new();
    let outcome = train_cascade(&volumes, &cfg.cascade(), &mut |s, r| {
        progress(s, r);
        records.push((s, *r));
    })?;
    write_atomic(&out.join(METRICS_FILE), &metrics_csv(&records))?;
    save_bundle(&out.join(BUNDLE_DIR), &outcome.bundle)?;
    let summary = TrainSummary {
        volumes: volumes.len(),
        stage1_epochs: outcome.stage1.epochs.len(),
        stage1_best_epoch: outcome.stage1.best_epoch,
        stage2_epochs: outcome.stage2.epochs.len(),
        stage2_best_epoch: outcome.stage2.best_epoch,
        stage1_fallbacks: outcome.fallbacks,
        filter_components: outcome.filter_examples.0,
        filter_true_positives: outcome.filter_examples.1,
    };
    write_atomic(&out.join("train_summary.json"), &json(&summary))?;
    Ok(outcome)
}

#[derive(Serialize)]
struct BscanMeta {
    bscan: usize,
    surface_fallback: bool,
    column_order_violations: usize,
}

fn predict_volume(bundle: &ModelBundle, v: &OctVolume) -> Result<Vec<BscanPrediction>> {
    (0..v.num_bscans()).into_par_iter().map(|i| Ok(predict_bscan(bundle, v, i)?)).collect()
}

/// Writes `<out>/<id>/bscan_NNN.png` (filtered), the pre-filter maps under
/// `prefilter/` and per-B-scan metadata.
pub fn infer(bundle_dir: &Path, manifest: &Path, out: &Path) -> Result<()> {
    let bundle = load_bundle(bundle_dir)?;
    let m = Manifest::read(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    for e in &m.volumes {
        let v = read_volume(&base.join(&e.volume))?;
        let preds = predict_volume(&bundle, &v)?;
        let dir = out.join(&e.id);
        let mut meta = Vec::new();
        for (i, p) in preds.iter().enumerate() {
            write_labels(&dir.join(bscan_file(i)), &p.labels)?;
            write_labels(&dir.join(PREFILTER_DIR).join(bscan_file(i)), &p.prefilter)?;
            meta.push(BscanMeta {
                bscan: i,
                surface_fallback: p.used_fallback(),
                column_order_violations: p.labels.column_order_violations().len(),
            });
        }
        write_atomic(&dir.join("meta.json"), &json(&meta))?;
        eprintln!("{}: {} B-scans", e.id, preds.len());
    }
    Ok(())
}

/// Scores a predictions directory laid out by [`infer`] against the truth.
/// Without a `prefilter/` directory the final maps serve as both columns.
pub fn evaluate(manifest: &Path, predictions: &Path, out: &Path) -> Result<EvalReport> {
    let m = Manifest::read(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let per_volume = m
        .volumes
        .par_iter()
        .map(|e| {
            let truth = load_entry(base, e)?;
            let dir = predictions.join(&e.id);
            (0..truth.volume.num_bscans())
                .map(|i| {
                    let final_map = read_labels(&dir.join(bscan_file(i)), ClassScheme::Stage2)?;
                    let pre_path = dir.join(PREFILTER_DIR).join(bscan_file(i));
                    let pre = if pre_path.exists() {
                        read_labels(&pre_path, ClassScheme::Stage2)?
                    } else {
                        final_map.clone()
                    };
                    Ok(BscanScores::score(&e.id, i, &pre, &final_map, &truth.labels[i])?)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport::from_rows(per_volume.into_iter().flatten().collect());
    write_eval_report(out, &report)?;
    Ok(report)
}

/// `runs/<name>/fold<i>/` reports plus the aggregate, with the config
/// snapshot at the top of the run directory.
pub fn cross_validate_cmd(cfg: &RunConfig, manifest: &Path, folds: usize, out: &Path) -> Result<CvReport> {
    let volumes: Vec<LabeledVolume> = Manifest::read(manifest)?.load(manifest)?;
    if folds > volumes.len() || folds == 0 {
        return Err(Error::Usage(format!("cannot split {} volumes into {folds} folds", volumes.len())));
    }
    cfg.save(&out.join(CONFIG_SNAPSHOT))?;
    let report = cross_validate(&volumes, folds, &cfg.cascade(), cfg.seed, &mut |f, s, r| {
        eprint!("fold {f} ");
        progress(s, r);
    })?;
    write_cv_report(out, &report)?;
    Ok(report)
}

/// Where overlay labels come from.
pub enum OverlaySource {
    Truth,
    Predictions(PathBuf),
    Bundle(PathBuf),
}

/// RGB overlays `<out>/<id>/bscan_NNN.png`; with a bundle also the stage-1
/// distance maps as 16-bit PNGs under `distance/`.
pub fn render_overlay(manifest: &Path, source: &OverlaySource, alpha: f64, out: &Path) -> Result<()> {
    let m = Manifest::read(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let bundle = match source {
        OverlaySource::Bundle(dir) => Some(load_bundle(dir)?),
        _ => None,
    };
    for e in &m.volumes {
        let v = read_volume(&base.join(&e.volume))?;
        let dir = out.join(&e.id);
        let preds = bundle.as_ref().map(|b| predict_volume(b, &v)).transpose()?;
        for i in 0..v.num_bscans() {
            let labels = match (source, &preds) {
                (OverlaySource::Truth, _) => {
                    read_labels(&base.join(&e.labels).join(bscan_file(i)), ClassScheme::Stage2)?
                }
                (OverlaySource::Predictions(p), _) => {
                    read_labels(&p.join(&e.id).join(bscan_file(i)), ClassScheme::Stage2)?
                }
                (OverlaySource::Bundle(_), Some(p)) => p[i].labels.clone(),
                (OverlaySource::Bundle(_), None) => unreachable!("bundle loaded above"),
            };
            write_atomic(&dir.join(bscan_file(i)), &overlay_png(v.bscan(i), &labels, alpha))?;
            if let Some(p) = &preds {
                write_atomic(&dir.join("distance").join(bscan_file(i)), &distance_png(&p[i].distance_map))?;
            }
        }
    }
    Ok(())
}
