//! Deep embedding providers.
//!
//! The pipeline never trains or re-implements a backbone. Embeddings come
//! either from [`SeededProjection`], a deterministic stand-in, or from an
//! exported network file run by [`ModelFileProvider`].

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{BlockKind, FeatureVector};
use crate::imaging::{resize_bilinear, RasterImage, CANONICAL_SIZE};
use crate::scalar::Real;

/// A deterministic image → vector mapping.
pub trait FeatureProvider: Send + Sync {
    /// Identifier used as the backbone name in reports.
    fn name(&self) -> &str;

    fn output_dim(&self) -> usize;

    /// Stable digest of everything that determines the embedding.
    fn fingerprint(&self) -> String;

    /// Embeds a 3-channel image. Output length is `output_dim()`.
    fn embed(&self, img: &RasterImage) -> Result<Vec<f64>>;
}

/// Runs `provider` and wraps the checked output as the `deep` block.
pub fn embed_block<T: Real>(provider: &dyn FeatureProvider, img: &RasterImage) -> Result<FeatureVector<T>> {
    let raw = provider.embed(img)?;
    if raw.len() != provider.output_dim() {
        return Err(Error::DimensionMismatch { expected: provider.output_dim(), actual: raw.len() });
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Inference(format!("{} produced a non-finite activation", provider.name())));
    }
    Ok(FeatureVector::new(BlockKind::Deep, raw.into_iter().map(T::lit).collect()))
}

/// Side of the block-averaged thumbnail fed to the projection.
pub const THUMBNAIL: usize = 16;
const THUMB_LEN: usize = THUMBNAIL * THUMBNAIL * 3;

/// Fixed Gaussian random projection of a 16×16×3 block-averaged thumbnail.
#[derive(Clone, Debug)]
pub struct SeededProjection {
    seed: u64,
    output_dim: usize,
    name: String,
    /// Row-major `THUMB_LEN × output_dim`.
    matrix: Vec<f64>,
}

impl SeededProjection {
    pub fn new(seed: u64, output_dim: usize) -> Result<Self> {
        if output_dim == 0 {
            return Err(Error::InvalidDim(output_dim));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (THUMB_LEN as f64).sqrt();
        let matrix = (0..THUMB_LEN * output_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        Ok(Self { seed, output_dim, name: format!("seeded-{seed}x{output_dim}"), matrix })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Block-averaged thumbnail scaled to `[0, 1]`, row-major RGB.
    pub fn thumbnail(img: &RasterImage) -> Vec<f64> {
        let img = img.to_rgb();
        let (w, h) = (img.width(), img.height());
        let span = |i: usize, len: usize| {
            let lo = i * len / THUMBNAIL;
            let hi = ((i + 1) * len / THUMBNAIL).max(lo + 1).min(len);
            (lo.min(len - 1), hi)
        };
        let mut out = Vec::with_capacity(THUMB_LEN);
        for by in 0..THUMBNAIL {
            let (y0, y1) = span(by, h);
            for bx in 0..THUMBNAIL {
                let (x0, x1) = span(bx, w);
                let mut acc = [0u64; 3];
                for y in y0..y1 {
                    for x in x0..x1 {
                        for (a, &v) in acc.iter_mut().zip(img.pixel(x, y)) {
                            *a += v as u64;
                        }
                    }
                }
                let n = ((y1 - y0) * (x1 - x0)) as f64 * 255.0;
                out.extend(acc.iter().map(|&a| a as f64 / n));
            }
        }
        out
    }
}

impl FeatureProvider for SeededProjection {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn fingerprint(&self) -> String {
        format!("seeded-projection:v1:{}:{}", self.seed, self.output_dim)
    }

    fn embed(&self, img: &RasterImage) -> Result<Vec<f64>> {
        if img.is_empty() {
            return Err(Error::EmptyImage);
        }
        let thumb = Self::thumbnail(img);
        let mut out = vec![0.0; self.output_dim];
        for (row, &t) in self.matrix.chunks_exact(self.output_dim).zip(&thumb) {
            for (o, &m) in out.iter_mut().zip(row) {
                *o += t * m;
            }
        }
        Ok(out)
    }
}

/// Memory layout of the network input tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// `1 × 3 × 224 × 224`
    Nchw,
    /// `1 × 224 × 224 × 3`
    Nhwc,
}

/// Sidecar describing how to feed an exported network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMetadata {
    pub name: String,
    pub output_dim: usize,
    pub layout: Layout,
    /// Multiplier applied to raw 8-bit samples before mean/std.
    pub scale: f64,
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl ModelMetadata {
    /// Sidecar location for a model file: same stem, `.toml` extension.
    pub fn sidecar_path(model: &Path) -> PathBuf {
        model.with_extension("toml")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::ModelLoad {
            path: path.to_path_buf(),
            reason: format!("cannot read sidecar metadata: {e}"),
        })?;
        let meta: Self = toml::from_str(&text)
            .map_err(|e| Error::ModelLoad { path: path.to_path_buf(), reason: e.to_string() })?;
        if meta.std.iter().any(|&s| !(s > 0.0)) || !meta.scale.is_finite() {
            return Err(Error::ModelLoad {
                path: path.to_path_buf(),
                reason: "std must be positive and scale finite".into(),
            });
        }
        Ok(meta)
    }

    /// Flattens an RGB image into the network's input order.
    pub fn preprocess(&self, img: &RasterImage) -> Vec<f32> {
        let (w, h) = (img.width(), img.height());
        let norm = |v: u8, c: usize| ((v as f64 * self.scale - self.mean[c]) / self.std[c]) as f32;
        let mut out = Vec::with_capacity(w * h * 3);
        match self.layout {
            Layout::Nhwc => {
                for (i, &v) in img.data().iter().enumerate() {
                    out.push(norm(v, i % 3));
                }
            }
            Layout::Nchw => {
                for c in 0..3 {
                    out.extend(img.data().iter().skip(c).step_by(3).map(|&v| norm(v, c)));
                }
            }
        }
        out
    }
}

/// Opens an exported network together with its sidecar metadata.
///
/// The output length is verified against `expected_dim` here, by a warm-up
/// inference, so mismatches never surface at embed time.
pub fn model_file_provider(path: impl AsRef<Path>, expected_dim: usize) -> Result<Box<dyn FeatureProvider>> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let sidecar = ModelMetadata::sidecar_path(path);
    if !sidecar.is_file() {
        return Err(Error::ModelLoad {
            path: path.to_path_buf(),
            reason: format!("missing sidecar metadata {}", sidecar.display()),
        });
    }
    let meta = ModelMetadata::load(&sidecar)?;
    if meta.output_dim != expected_dim {
        return Err(Error::DimensionMismatch { expected: expected_dim, actual: meta.output_dim });
    }
    let mut hasher = Sha256::new();
    hasher.update(std::fs::read(path)?);
    hasher.update(std::fs::read(&sidecar)?);
    let fingerprint = format!("model-file:v1:{}", hex::encode(hasher.finalize()));
    open_model(path, meta, fingerprint)
}

#[cfg(feature = "onnx")]
fn open_model(path: &Path, meta: ModelMetadata, fingerprint: String) -> Result<Box<dyn FeatureProvider>> {
    let provider = onnx::OnnxProvider::open(path, meta, fingerprint)?;
    Ok(Box::new(provider))
}

#[cfg(not(feature = "onnx"))]
fn open_model(path: &Path, _meta: ModelMetadata, _fingerprint: String) -> Result<Box<dyn FeatureProvider>> {
    Err(Error::ModelLoad {
        path: path.to_path_buf(),
        reason: "built without the `onnx` feature".into(),
    })
}

#[cfg(feature = "onnx")]
mod onnx {
    use std::path::Path;

    use tract_onnx::prelude::*;
    use tract_onnx::tract_hir::infer::Factoid;

    use super::{FeatureProvider, Layout, ModelMetadata};
    use crate::error::{Error, Result};
    use crate::imaging::{resize_bilinear, RasterImage, CANONICAL_SIZE};

    type Plan = TypedRunnableModel<TypedModel>;

    pub(super) struct OnnxProvider {
        meta: ModelMetadata,
        fingerprint: String,
        plan: Plan,
    }

    fn load_err(path: &Path, e: impl std::fmt::Display) -> Error {
        Error::ModelLoad { path: path.to_path_buf(), reason: e.to_string() }
    }

    impl OnnxProvider {
        pub(super) fn open(path: &Path, meta: ModelMetadata, fingerprint: String) -> Result<Self> {
            let s = CANONICAL_SIZE;
            let shape: [usize; 4] = match meta.layout {
                Layout::Nchw => [1, 3, s, s],
                Layout::Nhwc => [1, s, s, 3],
            };
            let model = tract_onnx::onnx().model_for_path(path).map_err(|e| load_err(path, e))?;
            let inputs = model.input_outlets().map_err(|e| load_err(path, e))?.len();
            let outputs = model.output_outlets().map_err(|e| load_err(path, e))?.len();
            if inputs != 1 || outputs != 1 {
                return Err(load_err(path, format!("expected one input and one output, found {inputs} and {outputs}")));
            }
            let declared = model.input_fact(0).map_err(|e| load_err(path, e))?.clone();
            // Symbolic dimensions (usually the batch) are accepted; fixed ones must match.
            let dims: Vec<Option<usize>> =
                declared.shape.dims().map(|d| d.concretize().and_then(|t| t.as_i64()).map(|v| v as usize)).collect();
            let rank_ok = dims.len() == 4 || (declared.shape.is_open() && dims.len() < 4);
            let fixed_ok = dims.iter().zip(&shape).all(|(d, &e)| d.is_none_or(|d| d == e));
            if !rank_ok || !fixed_ok {
                return Err(Error::InputShapeUnsupported(dims.iter().map(|d| d.unwrap_or(0)).collect()));
            }
            let plan = model
                .with_input_fact(0, f32::fact(shape).into())
                .and_then(|m| m.into_optimized())
                .and_then(|m| m.into_runnable())
                .map_err(|e| load_err(path, e))?;
            let provider = Self { meta, fingerprint, plan };
            let probe = RasterImage::filled(s, s, &[0, 0, 0])?;
            let out = provider.embed(&probe).map_err(|e| load_err(path, e))?;
            if out.len() != provider.meta.output_dim {
                return Err(Error::DimensionMismatch { expected: provider.meta.output_dim, actual: out.len() });
            }
            Ok(provider)
        }
    }

    impl FeatureProvider for OnnxProvider {
        fn name(&self) -> &str {
            &self.meta.name
        }

        fn output_dim(&self) -> usize {
            self.meta.output_dim
        }

        fn fingerprint(&self) -> String {
            self.fingerprint.clone()
        }

        fn embed(&self, img: &RasterImage) -> Result<Vec<f64>> {
            let s = CANONICAL_SIZE;
            let img = resize_bilinear(&img.to_rgb(), s, s)?;
            let data = self.meta.preprocess(&img);
            let shape: &[usize] = match self.meta.layout {
                Layout::Nchw => &[1, 3, s, s],
                Layout::Nhwc => &[1, s, s, 3],
            };
            let input = Tensor::from_shape(shape, &data).map_err(|e| Error::Inference(e.to_string()))?;
            let out = self.plan.run(tvec!(input.into())).map_err(|e| Error::Inference(e.to_string()))?;
            let view = out[0].to_array_view::<f32>().map_err(|e| Error::Inference(e.to_string()))?;
            Ok(view.iter().map(|&v| v as f64).collect())
        }
    }
}

/// Resizes arbitrary input to the canonical square before embedding.
pub fn embed_canonical(provider: &dyn FeatureProvider, img: &RasterImage) -> Result<Vec<f64>> {
    let img = resize_bilinear(&img.to_rgb(), CANONICAL_SIZE, CANONICAL_SIZE)?;
    provider.embed(&img)
}
