//! The five classifiers and their shared model container.

mod adaboost;
mod codec;
mod gboost;
mod knn;
mod svm;
mod tree;

pub use adaboost::{samme_alpha, AdaBoostModel};
pub use codec::{decode_model, encode_model, load_model, save_model};
pub use gboost::GradBoostModel;
pub use knn::KnnModel;
pub use svm::SvmModel;
pub use tree::{Forest, Node, Tree};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusedSample, Standardizer, NUM_CLASSES};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Knn,
    LinearSvm,
    RandomForest,
    Adaboost,
    GradBoost,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::Knn,
        ClassifierKind::LinearSvm,
        ClassifierKind::RandomForest,
        ClassifierKind::Adaboost,
        ClassifierKind::GradBoost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Knn => "knn",
            ClassifierKind::LinearSvm => "linear_svm",
            ClassifierKind::RandomForest => "random_forest",
            ClassifierKind::Adaboost => "adaboost",
            ClassifierKind::GradBoost => "grad_boost",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    /// Accepts the canonical names and the short forms `svm`, `rf`, `ada`, `gb`.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "knn" => ClassifierKind::Knn,
            "linear_svm" | "svm" => ClassifierKind::LinearSvm,
            "random_forest" | "rf" => ClassifierKind::RandomForest,
            "adaboost" | "ada" => ClassifierKind::Adaboost,
            "grad_boost" | "gb" | "xgboost" => ClassifierKind::GradBoost,
            other => {
                let valid: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                return Err(Error::InvalidConfig(format!(
                    "unknown classifier `{other}` (valid: {})",
                    valid.join(", ")
                )));
            }
        })
    }
}

/// Candidate features per forest node.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum FeatureFraction {
    #[default]
    Sqrt,
    Fraction(f64),
}

impl FeatureFraction {
    /// Number of candidate features for a `dim`-dimensional input.
    pub fn candidates(self, dim: usize) -> usize {
        let m = match self {
            FeatureFraction::Sqrt => (dim as f64).sqrt().ceil() as usize,
            FeatureFraction::Fraction(f) => (f * dim as f64).ceil() as usize,
        };
        m.clamp(1, dim.max(1))
    }
}

impl FromStr for FeatureFraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "sqrt" {
            return Ok(FeatureFraction::Sqrt);
        }
        s.trim()
            .parse::<f64>()
            .map(FeatureFraction::Fraction)
            .map_err(|_| Error::InvalidConfig(format!("rf_feature_frac `{s}` is neither `sqrt` nor a number")))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FractionRepr {
    Name(String),
    Value(f64),
}

impl Serialize for FeatureFraction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            FeatureFraction::Sqrt => FractionRepr::Name("sqrt".into()),
            FeatureFraction::Fraction(f) => FractionRepr::Value(f),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeatureFraction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match FractionRepr::deserialize(d)? {
            FractionRepr::Name(n) => n.parse().map_err(serde::de::Error::custom),
            FractionRepr::Value(v) => Ok(FeatureFraction::Fraction(v)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub knn_k: usize,
    pub svm_lambda: f64,
    pub svm_epochs: usize,
    pub rf_trees: usize,
    pub rf_max_depth: usize,
    pub rf_feature_frac: FeatureFraction,
    pub ada_stages: usize,
    pub gb_stages: usize,
    pub gb_learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            knn_k: 5,
            svm_lambda: 1e-4,
            svm_epochs: 50,
            rf_trees: 200,
            rf_max_depth: 16,
            rf_feature_frac: FeatureFraction::Sqrt,
            ada_stages: 100,
            gb_stages: 100,
            gb_learning_rate: 0.1,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("knn_k", self.knn_k),
            ("svm_epochs", self.svm_epochs),
            ("rf_trees", self.rf_trees),
            ("rf_max_depth", self.rf_max_depth),
            ("ada_stages", self.ada_stages),
            ("gb_stages", self.gb_stages),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        for (name, v) in [("svm_lambda", self.svm_lambda), ("gb_learning_rate", self.gb_learning_rate)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be a positive finite number, got {v}")));
            }
        }
        if let FeatureFraction::Fraction(f) = self.rf_feature_frac {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidConfig(format!("rf_feature_frac {f} not in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Kind-specific fitted parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelState<T> {
    Knn(KnnModel<T>),
    LinearSvm(SvmModel<T>),
    RandomForest(Forest<T>),
    Adaboost(AdaBoostModel<T>),
    GradBoost(GradBoostModel<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel<T = f64> {
    pub kind: ClassifierKind,
    pub config: TrainConfig,
    pub n_classes: usize,
    pub feature_dim: usize,
    pub seed: u64,
    /// Applied to raw inputs before scoring when present.
    pub standardizer: Option<Standardizer<T>>,
    pub state: ModelState<T>,
}

/// Row views and labels, after checking the shared preconditions.
pub(crate) fn unpack<T: Real>(samples: &[FusedSample<T>]) -> Result<(Vec<&[T]>, Vec<usize>, usize)> {
    let first = samples.first().ok_or(Error::InsufficientSamples { needed: 1, got: 0 })?;
    let dim = first.features.len();
    let mut rows = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for s in samples {
        if s.features.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: s.features.len() });
        }
        if s.label >= NUM_CLASSES {
            return Err(Error::LabelOutOfRange(s.label));
        }
        rows.push(s.features.as_slice());
        labels.push(s.label);
    }
    Ok((rows, labels, dim))
}

/// Trains one classifier on already standardized samples.
pub fn train<T: Real>(kind: ClassifierKind, samples: &[FusedSample<T>], cfg: &TrainConfig) -> Result<TrainedModel<T>> {
    cfg.validate()?;
    let (rows, labels, dim) = unpack(samples)?;
    let state = match kind {
        ClassifierKind::Knn => ModelState::Knn(KnnModel::fit(&rows, &labels, cfg.knn_k)?),
        ClassifierKind::LinearSvm => ModelState::LinearSvm(SvmModel::fit(&rows, &labels, cfg)?),
        ClassifierKind::RandomForest => ModelState::RandomForest(Forest::fit(&rows, &labels, cfg)?),
        ClassifierKind::Adaboost => ModelState::Adaboost(AdaBoostModel::fit(&rows, &labels, cfg)?),
        ClassifierKind::GradBoost => ModelState::GradBoost(GradBoostModel::fit(&rows, &labels, cfg)?),
    };
    Ok(TrainedModel {
        kind,
        config: cfg.clone(),
        n_classes: NUM_CLASSES,
        feature_dim: dim,
        seed: cfg.seed,
        standardizer: None,
        state,
    })
}

impl<T: Real> TrainedModel<T> {
    pub fn with_standardizer(mut self, s: Standardizer<T>) -> Result<Self> {
        if s.dim() != self.feature_dim {
            return Err(Error::DimensionMismatch { expected: self.feature_dim, actual: s.dim() });
        }
        self.standardizer = Some(s);
        Ok(self)
    }

    pub fn predict(&self, v: &[T]) -> Result<usize> {
        if v.len() != self.feature_dim {
            return Err(Error::DimensionMismatch { expected: self.feature_dim, actual: v.len() });
        }
        let scaled;
        let v = match &self.standardizer {
            Some(s) => {
                scaled = s.apply(v)?;
                scaled.as_slice()
            }
            None => v,
        };
        let class = match &self.state {
            ModelState::Knn(m) => m.predict(v),
            ModelState::LinearSvm(m) => m.predict(v),
            ModelState::RandomForest(m) => m.predict(v),
            ModelState::Adaboost(m) => m.predict(v),
            ModelState::GradBoost(m) => m.predict(v),
        };
        debug_assert!(class < self.n_classes);
        Ok(class)
    }

    pub fn predict_batch(&self, rows: &[FusedSample<T>]) -> Result<Vec<usize>> {
        rows.iter().map(|s| self.predict(&s.features)).collect()
    }
}
