//! The run configuration file and embedding-provider construction.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cache::ExtractionParams;
use crate::classifiers::{ClassifierKind, TrainConfig};
use crate::deep::{model_file_provider, FeatureProvider, SeededProjection};
use crate::error::{Error, Result};
use crate::evaluation::{FeatureSet, GridConfig};
use crate::features::HandcraftedParams;
use crate::segmentation::SegmentationConfig;

/// Provider name that selects [`SeededProjection`].
pub const SEEDED_PROVIDER: &str = "seeded";

/// Every tunable of a run. Serialized as TOML into each output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub train_frac: f64,
    pub output_dir: PathBuf,
    /// `seeded` or paths to exported model files; each is one backbone.
    pub providers: Vec<String>,
    pub deep_dim: usize,
    pub classifiers: Vec<ClassifierKind>,
    pub feature_set: FeatureSet,
    pub segmentation: SegmentationConfig,
    pub features: HandcraftedParams,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            train_frac: 0.8,
            output_dir: PathBuf::from("run"),
            providers: vec![SEEDED_PROVIDER.to_string()],
            deep_dim: 64,
            classifiers: ClassifierKind::ALL.to_vec(),
            feature_set: FeatureSet::Hybrid,
            segmentation: SegmentationConfig::default(),
            features: HandcraftedParams::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        // An explicit [train] seed is overridden by the top-level one.
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_toml(&text)
    }

    /// Propagates the top-level seed and checks every section.
    pub fn finalize(mut self) -> Result<Self> {
        self.train.seed = self.seed;
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::InvalidFraction(self.train_frac));
        }
        if self.providers.is_empty() {
            return Err(Error::Config("at least one provider is required".into()));
        }
        if self.classifiers.is_empty() {
            return Err(Error::Config("at least one classifier is required".into()));
        }
        if self.deep_dim == 0 {
            return Err(Error::InvalidDim(0));
        }
        self.segmentation.validate()?;
        self.features.glcm.validate()?;
        if !(1..=7).contains(&self.features.ldp_k) {
            return Err(Error::InvalidK(self.features.ldp_k));
        }
        if !(2..=256).contains(&self.features.hist_bins) {
            return Err(Error::InvalidDescriptorConfig(format!("hist_bins {} not in 2..=256", self.features.hist_bins)));
        }
        if self.features.zernike_order > crate::features::MAX_ZERNIKE_ORDER {
            return Err(Error::InvalidOrder(self.features.zernike_order));
        }
        self.train.validate()?;
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Writes `run_config.toml` into `dir`.
    pub fn echo_into(&self, dir: &Path) -> Result<()> {
        crate::io_util::write_atomic(&dir.join("run_config.toml"), self.to_toml().as_bytes())
    }

    pub fn extraction(&self) -> ExtractionParams {
        ExtractionParams { segmentation: self.segmentation.clone(), features: self.features.clone() }
    }

    pub fn grid(&self) -> GridConfig {
        GridConfig {
            extraction: self.extraction(),
            train: TrainConfig { seed: self.seed, ..self.train.clone() },
            train_frac: self.train_frac,
            feature_set: self.feature_set,
        }
    }
}

/// `seeded` builds a [`SeededProjection`] from `seed`; anything else is a
/// model file path.
pub fn make_provider(spec: &str, dim: usize, seed: u64) -> Result<Box<dyn FeatureProvider>> {
    if spec == SEEDED_PROVIDER {
        Ok(Box::new(SeededProjection::new(seed, dim)?))
    } else {
        model_file_provider(spec, dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default().finalize().unwrap();
        let text = cfg.to_toml();
        assert!(text.contains("train_frac = 0.8"));
        assert!(text.contains("[segmentation]"));
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_gets_defaults() {
        let cfg = RunConfig::from_toml("seed = 7\n[train]\nknn_k = 3\n").unwrap().finalize().unwrap();
        assert_eq!((cfg.seed, cfg.train.seed, cfg.train.knn_k, cfg.train.rf_trees), (7, 7, 3, 200));
        assert_eq!(cfg.classifiers.len(), 5);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(RunConfig::from_toml("sed = 1"), Err(Error::Config(_))));
        let cfg = RunConfig { train_frac: 1.0, ..Default::default() };
        assert!(matches!(cfg.finalize(), Err(Error::InvalidFraction(_))));
        let cfg = RunConfig::from_toml("[segmentation]\nblock_size = 4\n").unwrap();
        assert!(cfg.finalize().is_err());
        assert!(RunConfig::from_toml("classifiers = [\"mlp\"]").is_err());
    }

    #[test]
    fn provider_specs() {
        let p = make_provider("seeded", 16, 3).unwrap();
        assert_eq!(p.output_dim(), 16);
        assert!(matches!(make_provider("/no/such/model.onnx", 16, 3), Err(Error::FileNotFound(_))));
    }
}
