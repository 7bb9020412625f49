//! Raw containers: an 8-byte magic, a little-endian u32 header length, a
//! UTF-8 JSON header and a little-endian f32 payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use octseg_core::data::OctVolume;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

pub const VOLUME_MAGIC: &[u8; 8] = b"OCTVOL01";
pub const PARAMS_MAGIC: &[u8; 8] = b"OCTPAR01";

fn encode<H: Serialize>(magic: &[u8; 8], header: &H, payload: impl Iterator<Item = f32>) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode<H: for<'de> Deserialize<'de>>(path: &Path, magic: &[u8; 8], bytes: &[u8]) -> Result<(H, Vec<f32>)> {
    if bytes.len() < 8 || &bytes[..8] != magic {
        return Err(Error::Format {
            path: path.into(),
            msg: format!("expected magic {}", String::from_utf8_lossy(magic)),
        });
    }
    let corrupt = |msg: String| Error::Corrupt { path: path.into(), msg };
    let len = bytes.get(8..12).ok_or_else(|| corrupt("truncated header length".into()))?;
    let len = u32::from_le_bytes(len.try_into().expect("4 bytes")) as usize;
    let json = bytes.get(12..12 + len).ok_or_else(|| corrupt("truncated header".into()))?;
    let header = serde_json::from_slice(json).map_err(|e| corrupt(format!("header: {e}")))?;
    let payload = &bytes[12 + len..];
    if payload.len() % 4 != 0 {
        return Err(corrupt(format!("payload of {} bytes is not whole f32 values", payload.len())));
    }
    let values = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Ok((header, values))
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp).at(&tmp)?;
    f.write_all(bytes).at(&tmp)?;
    f.sync_all().at(&tmp)?;
    fs::rename(&tmp, path).at(path)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VolumeHeader {
    /// `[num_bscans, height, width]`.
    dims: [usize; 3],
    dtype: String,
    spacing_um: [f64; 3],
}

const DTYPE: &str = "f32le";

pub fn volume_to_bytes(v: &OctVolume) -> Vec<u8> {
    let header = VolumeHeader { dims: v.dims(), dtype: DTYPE.into(), spacing_um: v.spacing_um };
    encode(VOLUME_MAGIC, &header, v.voxels().iter().copied())
}

pub fn volume_from_bytes(path: &Path, bytes: &[u8]) -> Result<OctVolume> {
    let (h, voxels): (VolumeHeader, _) = decode(path, VOLUME_MAGIC, bytes)?;
    if h.dtype != DTYPE {
        return Err(Error::Format { path: path.into(), msg: format!("unsupported dtype {}", h.dtype) });
    }
    let [n, rows, cols] = h.dims;
    let expected = n.checked_mul(rows).and_then(|v| v.checked_mul(cols));
    if expected != Some(voxels.len()) {
        return Err(Error::Corrupt {
            path: path.into(),
            msg: format!("header dims {n}x{rows}x{cols} but payload holds {} values", voxels.len()),
        });
    }
    OctVolume::new(n, rows, cols, voxels, h.spacing_um)
        .map_err(|e| Error::Corrupt { path: path.into(), msg: e.to_string() })
}

pub fn write_volume(path: &Path, v: &OctVolume) -> Result<()> {
    write_atomic(path, &volume_to_bytes(v))
}

pub fn read_volume(path: &Path) -> Result<OctVolume> {
    volume_from_bytes(path, &fs::read(path).at(path)?)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsHeader {
    dtype: String,
    tensors: Vec<TensorEntry>,
}

/// A named tensor: name, shape, values.
pub type NamedTensor = (String, Vec<usize>, Vec<f32>);

pub fn write_params(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    let header = ParamsHeader {
        dtype: DTYPE.into(),
        tensors: tensors.iter().map(|(n, s, _)| TensorEntry { name: n.clone(), shape: s.clone() }).collect(),
    };
    write_atomic(path, &encode(PARAMS_MAGIC, &header, tensors.iter().flat_map(|t| t.2.iter().copied())))
}

pub fn read_params(path: &Path) -> Result<Vec<NamedTensor>> {
    let bytes = fs::read(path).at(path)?;
    let (h, values): (ParamsHeader, Vec<f32>) = decode(path, PARAMS_MAGIC, &bytes)?;
    if h.dtype != DTYPE {
        return Err(Error::Format { path: path.into(), msg: format!("unsupported dtype {}", h.dtype) });
    }
    let mut out = Vec::with_capacity(h.tensors.len());
    let mut rest = values.as_slice();
    for t in h.tensors {
        let n: usize = t.shape.iter().product();
        if rest.len() < n {
            return Err(Error::Corrupt { path: path.into(), msg: format!("payload ends inside tensor {}", t.name) });
        }
        let (head, tail) = rest.split_at(n);
        out.push((t.name, t.shape, head.to_vec()));
        rest = tail;
    }
    if !rest.is_empty() {
        return Err(Error::Corrupt { path: path.into(), msg: format!("{} trailing values", rest.len()) });
    }
    Ok(out)
}
