//! PNG encoding of label maps, overlays and distance maps.

use std::fs;
use std::path::Path;

use octseg_core::data::{ClassScheme, LabelMap};
use octseg_core::distmap::{RelativeDistanceMap, CLIP_MAX, CLIP_MIN};

use crate::container::write_atomic;
use crate::error::{Error, IoContext, Result};

/// Overlay colours for the eight classes, indexed by class id.
pub const PALETTE: [[u8; 3]; 8] = [
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [70, 70, 70],
    [0, 255, 255],
];

/// Text key under which the distance-map value mapping is stored.
pub const DISTANCE_KEY: &str = "octseg:distance-map";

fn encode(
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
    text: Option<(&str, String)>,
) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        if let Some((k, v)) = text {
            enc.add_text_chunk(k.into(), v).expect("latin-1 key");
        }
        let mut w = enc.write_header().expect("in-memory write");
        w.write_image_data(data).expect("in-memory write");
    }
    out
}

pub fn label_png(labels: &LabelMap) -> Vec<u8> {
    encode(labels.width(), labels.height(), png::ColorType::Grayscale, png::BitDepth::Eight, labels.labels(), None)
}

pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    write_atomic(path, &label_png(labels))
}

pub fn read_labels(path: &Path, scheme: ClassScheme) -> Result<LabelMap> {
    let png_err = |msg: String| Error::Png { path: path.into(), msg };
    let file = fs::File::open(path).at(path)?;
    let mut reader =
        png::Decoder::new(std::io::BufReader::new(file)).read_info().map_err(|e| png_err(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| png_err("image too large".into()))?];
    let info = reader.next_frame(&mut buf).map_err(|e| png_err(e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(png_err(format!(
            "label maps are 8-bit grayscale, found {:?} {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut labels = Vec::with_capacity(w * h);
    for row in buf[..info.buffer_size()].chunks(info.line_size) {
        labels.extend_from_slice(&row[..w]);
    }
    LabelMap::new(h, w, scheme, labels).map_err(|e| png_err(e.to_string()))
}

/// Grayscale B-scan blended with the class colours at `alpha`.
pub fn overlay_png(bscan: &[f32], labels: &LabelMap, alpha: f64) -> Vec<u8> {
    let a = alpha.clamp(0.0, 1.0);
    let mut rgb = Vec::with_capacity(bscan.len() * 3);
    for (&v, &l) in bscan.iter().zip(labels.labels()) {
        let g = v.clamp(0.0, 1.0) as f64 * 255.0;
        let c = PALETTE[l as usize % PALETTE.len()];
        for ch in c {
            rgb.push(((1.0 - a) * g + a * ch as f64).round() as u8);
        }
    }
    encode(labels.width(), labels.height(), png::ColorType::Rgb, png::BitDepth::Eight, &rgb, None)
}

/// Distance map as 16-bit grayscale: `value = CLIP_MIN + pixel · scale`.
pub fn distance_png(map: &RelativeDistanceMap) -> Vec<u8> {
    let scale = (CLIP_MAX - CLIP_MIN) / 65535.0;
    let mut data = Vec::with_capacity(map.values().len() * 2);
    for &v in map.values() {
        let p = ((v.clamp(CLIP_MIN, CLIP_MAX) - CLIP_MIN) / scale).round() as u16;
        data.extend_from_slice(&p.to_be_bytes());
    }
    let text = format!("value = {CLIP_MIN} + pixel * {scale:e}");
    encode(
        map.width(),
        map.height(),
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
        &data,
        Some((DISTANCE_KEY, text)),
    )
}
