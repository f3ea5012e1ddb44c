//! Diabetic-retinopathy grading from fundus photographs by fusing
//! handcrafted shape, texture and color descriptors with deep embeddings.
//!
//! The numeric core is generic over [`scalar::Real`] (`f32`, `f64`); scoring
//! is generic over [`scalar::Field`] and also runs on exact rationals. The
//! aliases below fix the scalar for the common cases.

pub mod cache;
pub mod classifiers;
pub mod config;
pub mod dataset;
pub mod deep;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod fusion;
pub mod imaging;
pub mod io_util;
pub mod scalar;
pub mod segmentation;
pub mod synth;

pub use error::{Error, Result};

pub type Sample = fusion::FusedSample<f64>;
pub type Sample32 = fusion::FusedSample<f32>;
pub type Model = classifiers::TrainedModel<f64>;
pub type Model32 = classifiers::TrainedModel<f32>;
pub type Standardizer = fusion::Standardizer<f64>;
pub type Standardizer32 = fusion::Standardizer<f32>;
pub type Report = evaluation::MetricsReport<f64>;
pub type Features = features::FeatureVector<f64>;
pub type Features32 = features::FeatureVector<f32>;
