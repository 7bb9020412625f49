use octseg::container::{read_params, read_volume, volume_from_bytes, volume_to_bytes, write_params, write_volume};
use octseg::error::Error;
use octseg::image::{distance_png, label_png, read_labels, write_labels, DISTANCE_KEY};
use octseg_core::data::{ClassScheme, LabelMap, OctVolume};
use octseg_core::distmap::RelativeDistanceMap;
use proptest::prelude::*;
use std::path::Path;

fn volume(n: usize, h: usize, w: usize, seed: u32) -> OctVolume {
    let voxels =
        (0..n * h * w).map(|i| ((i as u32).wrapping_mul(2654435761) ^ seed) as f32 / u32::MAX as f32).collect();
    OctVolume::new(n, h, w, voxels, [5.0, 12.2, 12.2]).unwrap()
}

#[test]
fn volume_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.octv");
    let v = volume(2, 16, 16, 1);
    write_volume(&path, &v).unwrap();
    let back = read_volume(&path).unwrap();
    assert_eq!(back, v);
    let bits = |v: &OctVolume| v.voxels().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&v));
    assert_eq!(&std::fs::read(&path).unwrap()[..8], b"OCTVOL01");
}

#[test]
fn short_payload_is_corrupt() {
    let bytes = volume_to_bytes(&volume(2, 16, 16, 2));
    // header says 2x16x16 but the payload is 256 floats short
    let short = &bytes[..bytes.len() - 256 * 4];
    assert!(matches!(volume_from_bytes(Path::new("x"), short), Err(Error::Corrupt { .. })));
    assert!(matches!(volume_from_bytes(Path::new("x"), &bytes[..bytes.len() - 2]), Err(Error::Corrupt { .. })));
}

#[test]
fn wrong_magic_is_a_format_error() {
    let mut bytes = volume_to_bytes(&volume(1, 16, 16, 3));
    bytes[6..8].copy_from_slice(b"99");
    assert!(matches!(volume_from_bytes(Path::new("x"), &bytes), Err(Error::Format { .. })));
    assert!(matches!(volume_from_bytes(Path::new("x"), b"OCT"), Err(Error::Format { .. })));
}

#[test]
fn missing_file_names_the_path() {
    let err = read_volume(Path::new("/nonexistent/vol.octv")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/vol.octv"));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn params_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.params");
    let tensors = vec![
        ("a".to_string(), vec![2, 3], vec![1.5f32, -0.0, f32::MIN_POSITIVE, 4.0, 5.0, 6.0]),
        ("b".to_string(), vec![1], vec![7.0]),
    ];
    write_params(&path, &tensors).unwrap();
    let back = read_params(&path).unwrap();
    assert_eq!(back.len(), 2);
    for (a, b) in tensors.iter().zip(&back) {
        assert_eq!((&a.0, &a.1), (&b.0, &b.1));
        assert_eq!(
            a.2.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.2.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn label_png_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.png");
    let labels = LabelMap::new(3, 5, ClassScheme::Stage2, (0..15).map(|i| (i % 8) as u8).collect()).unwrap();
    write_labels(&path, &labels).unwrap();
    assert_eq!(read_labels(&path, ClassScheme::Stage2).unwrap(), labels);
    // ids outside the stage-1 scheme are rejected on read
    assert!(read_labels(&path, ClassScheme::Stage1).is_err());
    assert_eq!(label_png(&labels), std::fs::read(&path).unwrap());
}

#[test]
fn distance_png_records_mapping() {
    let map = RelativeDistanceMap::constant(4, 4, 0.5);
    let bytes = distance_png(&map);
    let reader = png::Decoder::new(std::io::Cursor::new(bytes)).read_info().unwrap();
    let info = reader.info();
    assert_eq!(info.bit_depth, png::BitDepth::Sixteen);
    assert!(info.uncompressed_latin1_text.iter().any(|t| t.keyword == DISTANCE_KEY && t.text.contains("-2")));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn random_volumes_round_trip(n in 1usize..4, h in 16usize..24, w in 16usize..24, seed in any::<u32>()) {
        let v = volume(n, h, w, seed);
        let back = volume_from_bytes(Path::new("x"), &volume_to_bytes(&v)).unwrap();
        prop_assert_eq!(back, v);
    }
}
