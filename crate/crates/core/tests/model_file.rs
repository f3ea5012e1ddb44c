//! Exported-network provider against a reference runtime's output.
#![cfg(feature = "onnx")]

use std::path::PathBuf;

use retifuse::deep::{model_file_provider, ModelMetadata};
use retifuse::imaging::RasterImage;
use retifuse::Error;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn pattern() -> RasterImage {
    let mut px = Vec::with_capacity(224 * 224 * 3);
    for y in 0..224usize {
        for x in 0..224usize {
            for c in 0..3usize {
                px.push(((x * 7 + y * 13 + c * 50) % 256) as u8);
            }
        }
    }
    RasterImage::new(224, 224, 3, px).unwrap()
}

#[test]
fn matches_reference_runtime() {
    let p = model_file_provider(data("tiny.onnx"), 8).unwrap();
    assert_eq!(p.name(), "tiny");
    assert_eq!(p.output_dim(), 8);
    let golden: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(data("tiny_golden.json")).unwrap()).unwrap();
    let out = p.embed(&pattern()).unwrap();
    assert_eq!(out.len(), 8);
    for (a, b) in out.iter().zip(&golden) {
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
    }
    assert_eq!(out, p.embed(&pattern()).unwrap());
}

#[test]
fn fingerprint_covers_model_and_sidecar() {
    let a = model_file_provider(data("tiny.onnx"), 8).unwrap();
    let b = model_file_provider(data("tiny.onnx"), 8).unwrap();
    assert_eq!(a.fingerprint(), b.fingerprint());
    assert!(a.fingerprint().starts_with("model-file:v1:"));
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(data("tiny.onnx"), dir.path().join("m.onnx")).unwrap();
    let sidecar = std::fs::read_to_string(data("tiny.toml")).unwrap().replace("0.485", "0.5");
    std::fs::write(dir.path().join("m.toml"), sidecar).unwrap();
    let c = model_file_provider(dir.path().join("m.onnx"), 8).unwrap();
    assert_ne!(a.fingerprint(), c.fingerprint());
}

#[test]
fn load_errors() {
    assert!(matches!(model_file_provider(data("missing.onnx"), 8), Err(Error::FileNotFound(_))));
    assert!(matches!(model_file_provider(data("tiny.onnx"), 9), Err(Error::DimensionMismatch { expected: 9, actual: 8 })));
    match model_file_provider(data("tiny_32.onnx"), 8) {
        Err(Error::InputShapeUnsupported(dims)) => assert_eq!(&dims[1..], &[3, 32, 32]),
        other => panic!("{:?}", other.map(|p| p.name().to_string())),
    }
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(data("tiny.onnx"), dir.path().join("bare.onnx")).unwrap();
    assert!(matches!(model_file_provider(dir.path().join("bare.onnx"), 8), Err(Error::ModelLoad { .. })));
    std::fs::write(dir.path().join("junk.onnx"), b"not a model").unwrap();
    std::fs::copy(data("tiny.toml"), dir.path().join("junk.toml")).unwrap();
    assert!(matches!(model_file_provider(dir.path().join("junk.onnx"), 8), Err(Error::ModelLoad { .. })));
    assert_eq!(ModelMetadata::sidecar_path(&data("tiny.onnx")), data("tiny.toml"));
}
