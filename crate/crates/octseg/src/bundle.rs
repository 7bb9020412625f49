//! Model bundle directories: `config.json`, `stage1.params`,
//! `stage2.params` and `filter.json`.

use std::fs;
use std::path::Path;

use octseg_core::cascade::{CascadeConfig, ModelBundle};
use octseg_core::fluid::FluidFilter;
use octseg_core::lfunet::{LfUNet, NetworkConfig};

use crate::container::{read_params, write_atomic, write_params, NamedTensor};
use crate::error::{Error, IoContext, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const STAGE1_FILE: &str = "stage1.params";
pub const STAGE2_FILE: &str = "stage2.params";
pub const FILTER_FILE: &str = "filter.json";

pub fn network_tensors(net: &LfUNet<f32>) -> Vec<NamedTensor> {
    net.named_params().into_iter().map(|(n, p)| (n, p.shape, p.value)).collect()
}

pub fn load_network(config: NetworkConfig, path: &Path) -> Result<LfUNet<f32>> {
    let mut net = LfUNet::with_seed(config, 0)?;
    net.load_named(&read_params(path)?).map_err(|e| Error::Corrupt { path: path.into(), msg: e.to_string() })?;
    Ok(net)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).at(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Corrupt { path: path.into(), msg: format!("at {}: {}", e.path(), e.inner()) })
}

pub fn save_bundle(dir: &Path, bundle: &ModelBundle) -> Result<()> {
    fs::create_dir_all(dir).at(dir)?;
    write_json(&dir.join(CONFIG_FILE), &bundle.config)?;
    write_params(&dir.join(STAGE1_FILE), &network_tensors(&bundle.stage1))?;
    write_params(&dir.join(STAGE2_FILE), &network_tensors(&bundle.stage2))?;
    write_json(&dir.join(FILTER_FILE), &bundle.filter)
}

pub fn load_bundle(dir: &Path) -> Result<ModelBundle> {
    let config: CascadeConfig = read_json(&dir.join(CONFIG_FILE))?;
    config.validate()?;
    let stage1 = load_network(config.stage1.clone(), &dir.join(STAGE1_FILE))?;
    let stage2 = load_network(config.stage2.clone(), &dir.join(STAGE2_FILE))?;
    let filter: FluidFilter = read_json(&dir.join(FILTER_FILE))?;
    Ok(ModelBundle { config, stage1, stage2, filter })
}
