use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("cannot decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    UnsupportedChannelCount(usize),
    #[error("image is empty")]
    EmptyImage,
    #[error("invalid image buffer: {0}")]
    InvalidImage(String),

    #[error("invalid kernel size {kernel} for a {width}x{height} image (must be odd and fit)")]
    InvalidKernel { kernel: usize, width: usize, height: usize },
    #[error("invalid sigma {0} (must be > 0)")]
    InvalidSigma(f64),
    #[error("invalid block size {0} (must be odd and >= 3)")]
    InvalidBlockSize(usize),
    #[error("invalid structuring element radius {0} (must be >= 1)")]
    InvalidRadius(usize),
    #[error("segmentation produced an empty region of interest")]
    EmptyRoi,

    #[error("invalid Zernike order {0}")]
    InvalidOrder(usize),
    #[error("region of interest is degenerate: {0}")]
    DegenerateRoi(&'static str),
    #[error("invalid LDP k = {0} (must be in 1..=7)")]
    InvalidK(usize),
    #[error("expected a 3-channel image")]
    NotColorImage,
    #[error("invalid descriptor configuration: {0}")]
    InvalidDescriptorConfig(String),

    #[error("invalid embedding dimension {0}")]
    InvalidDim(usize),
    #[error("cannot load model {path}: {reason}")]
    ModelLoad { path: PathBuf, reason: String },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("unsupported model input shape {0:?}")]
    InputShapeUnsupported(Vec<usize>),
    #[error("inference failed: {0}")]
    Inference(String),

    #[error("no feature blocks to concatenate")]
    EmptyBlockList,
    #[error("feature block `{found}` appears after `{previous}`")]
    BlockOrderViolation { previous: &'static str, found: &'static str },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid k = {k} for {n} training samples")]
    InvalidNeighbors { k: usize, n: usize },
    #[error("training set contains a single class")]
    SingleClassTrainingSet,
    #[error("label {0} out of range")]
    LabelOutOfRange(usize),
    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("class {class} has {count} records (need >= 2)")]
    ClassTooSmall { class: usize, count: usize },
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("confusion matrix is empty")]
    EmptyMatrix,

    #[error("missing class directory {0}")]
    MissingClassDirectory(PathBuf),
    #[error("dataset at {0} contains no decodable images")]
    EmptyDataset(PathBuf),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("feature cache is corrupt or stale: {0}")]
    CacheCorrupt(String),
    #[error("invalid run configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
