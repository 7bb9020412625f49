//! Volume-level k-fold cross-validation.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::{evaluate_cascade, CascadeConfig};
use crate::data::LabeledVolume;
use crate::error::{Error, Result};
use crate::metrics::{BscanScores, EvalReport, Summary};
use crate::train::{train_cascade, EpochRecord, Stage};

/// Volume indices of each test fold. Folds are a seeded shuffle dealt
/// round-robin, so sizes differ by at most one.
pub fn partition_folds(num_volumes: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > num_volumes {
        return Err(Error::Config(alloc::format!("cannot split {num_volumes} volumes into {k} folds")));
    }
    let mut order: Vec<usize> = (0..num_volumes).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = alloc::vec![Vec::new(); k];
    for (i, v) in order.into_iter().enumerate() {
        folds[i % k].push(v);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Train/test volume indices of one fold.
pub fn split(folds: &[Vec<usize>], fold: usize) -> (Vec<usize>, Vec<usize>) {
    let test = folds[fold].clone();
    let mut train: Vec<usize> =
        folds.iter().enumerate().filter(|(i, _)| *i != fold).flat_map(|(_, f)| f.clone()).collect();
    train.sort_unstable();
    (train, test)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_ids: Vec<alloc::string::String>,
    pub test_ids: Vec<alloc::string::String>,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldReport>,
    /// Means over every held-out B-scan of every fold.
    pub aggregate: Summary,
}

impl CvReport {
    pub fn from_folds(folds: Vec<FoldReport>) -> Self {
        let rows: Vec<BscanScores> = folds.iter().flat_map(|f| f.report.rows.iter().cloned()).collect();
        Self { aggregate: Summary::of(&rows), folds }
    }
}

/// Runs one fold: trains a cascade on the other folds and scores the held-out
/// volumes.
pub fn run_fold(
    volumes: &[LabeledVolume],
    folds: &[Vec<usize>],
    fold: usize,
    config: &CascadeConfig,
    observer: &mut dyn FnMut(Stage, &EpochRecord),
) -> Result<FoldReport> {
    let (train, test) = split(folds, fold);
    let pick = |ix: &[usize]| ix.iter().map(|&i| volumes[i].clone()).collect::<Vec<_>>();
    let (train_set, test_set) = (pick(&train), pick(&test));
    let outcome = train_cascade(&train_set, config, observer)?;
    Ok(FoldReport {
        fold,
        train_ids: train_set.iter().map(|v| v.id.clone()).collect(),
        test_ids: test_set.iter().map(|v| v.id.clone()).collect(),
        report: evaluate_cascade(&outcome.bundle, &test_set)?,
    })
}

pub fn cross_validate(
    volumes: &[LabeledVolume],
    k: usize,
    config: &CascadeConfig,
    seed: u64,
    observer: &mut dyn FnMut(usize, Stage, &EpochRecord),
) -> Result<CvReport> {
    let folds = partition_folds(volumes.len(), k, seed)?;
    let reports = (0..k)
        .map(|f| run_fold(volumes, &folds, f, config, &mut |s, r| observer(f, s, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CvReport::from_folds(reports))
}
