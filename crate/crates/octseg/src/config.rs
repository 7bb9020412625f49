//! The JSON run configuration. Every field has a default; unknown keys are
//! rejected and reported with the JSON pointer of the offending key.

use std::fs;
use std::path::{Path, PathBuf};

use octseg_core::cascade::CascadeConfig;
use octseg_core::forest::ForestConfig;
use octseg_core::lfunet::NetworkConfig;
use octseg_core::losses::LossConfig;
use octseg_core::phantom::PhantomConfig;
use octseg_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::container::write_atomic;
use crate::error::{Error, IoContext, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSection {
    pub num_volumes: usize,
    pub generator: PhantomConfig,
}

impl Default for PhantomSection {
    fn default() -> Self {
        Self { num_volumes: 10, generator: PhantomConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub folds: usize,
    pub forest: ForestConfig,
    /// Overlay opacity of the class colours.
    pub overlay_alpha: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { folds: 10, forest: ForestConfig::default(), overlay_alpha: 0.4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub corpus: PathBuf,
    pub runs: PathBuf,
    pub run_name: String,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self { corpus: "data/phantom".into(), runs: "runs".into(), run_name: "default".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub phantom: PhantomSection,
    pub network_stage1: NetworkConfig,
    pub network_stage2: NetworkConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub paths: PathsSection,
    /// Master seed; overrides the per-section seeds.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let c = CascadeConfig::default();
        Self {
            phantom: PhantomSection::default(),
            network_stage1: c.stage1,
            network_stage2: c.stage2,
            loss: c.loss,
            train: c.train,
            eval: EvalSection::default(),
            paths: PathsSection::default(),
            seed: 0,
        }
    }
}

fn config_error(path: &Path, pointer: &str, msg: impl ToString) -> Error {
    Error::Config { path: path.into(), pointer: pointer.into(), msg: msg.to_string() }
}

/// `serde_path_to_error` paths use dots; JSON pointers use slashes.
fn pointer(path: &serde_path_to_error::Path) -> String {
    let dotted = path.to_string();
    if dotted == "." {
        String::from("/")
    } else {
        format!("/{}", dotted.replace('.', "/").replace(['[', ']'], ""))
    }
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self =
            serde_path_to_error::deserialize(de).map_err(|e| config_error(origin, &pointer(e.path()), e.inner()))?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).at(path)?, path)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn validate(&self, origin: &Path) -> Result<()> {
        let check = |ptr: &str, r: octseg_core::Result<()>| r.map_err(|e| config_error(origin, ptr, e));
        check("/phantom/generator", self.phantom.generator.validate())?;
        check("/network_stage1", self.network_stage1.validate())?;
        check("/network_stage2", self.network_stage2.validate())?;
        check("/loss", self.loss.validate())?;
        check("/train", self.train.validate())?;
        let c = self.cascade();
        check("/network_stage1", c.validate())?;
        if self.eval.folds < 2 {
            return Err(config_error(origin, "/eval/folds", "cross-validation needs at least 2 folds"));
        }
        if !(0.0..=1.0).contains(&self.eval.overlay_alpha) {
            return Err(config_error(origin, "/eval/overlay_alpha", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Training configuration with the master seed applied.
    pub fn cascade(&self) -> CascadeConfig {
        CascadeConfig {
            stage1: self.network_stage1.clone(),
            stage2: self.network_stage2.clone(),
            loss: self.loss.clone(),
            train: TrainConfig { seed: self.seed, ..self.train.clone() },
            forest: ForestConfig { seed: self.seed, ..self.eval.forest.clone() },
        }
    }

    pub fn phantom_config(&self) -> PhantomConfig {
        PhantomConfig { seed: self.seed, ..self.phantom.generator.clone() }
    }
}
