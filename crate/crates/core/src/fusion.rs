//! Block concatenation and z-score standardization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{BlockKind, FeatureVector};
use crate::scalar::Real;

/// Number of severity grades.
pub const NUM_CLASSES: usize = 5;

/// Where each block landed inside a fused vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    /// `(kind, offset, dim)` in canonical order.
    pub blocks: Vec<(BlockKind, usize, usize)>,
}

impl BlockLayout {
    pub fn total_dim(&self) -> usize {
        self.blocks.last().map_or(0, |&(_, off, dim)| off + dim)
    }

    pub fn range(&self, kind: BlockKind) -> Option<std::ops::Range<usize>> {
        self.blocks.iter().find(|b| b.0 == kind).map(|&(_, off, dim)| off..off + dim)
    }

    /// Builds a layout from `(kind, dim)` pairs, enforcing canonical order.
    pub fn from_dims(dims: &[(BlockKind, usize)]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::EmptyBlockList);
        }
        let mut blocks = Vec::with_capacity(dims.len());
        let mut offset = 0;
        for (i, &(kind, dim)) in dims.iter().enumerate() {
            if i > 0 && dims[i - 1].0 >= kind {
                return Err(Error::BlockOrderViolation { previous: dims[i - 1].0.name(), found: kind.name() });
            }
            blocks.push((kind, offset, dim));
            offset += dim;
        }
        Ok(Self { blocks })
    }
}

/// A concatenated vector and its block boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct Fused<T = f64> {
    pub values: Vec<T>,
    pub layout: BlockLayout,
}

/// Concatenates blocks given in canonical order (a subset is allowed).
pub fn concat<T: Real>(blocks: &[FeatureVector<T>]) -> Result<Fused<T>> {
    let dims: Vec<_> = blocks.iter().map(|b| (b.kind, b.dim())).collect();
    let layout = BlockLayout::from_dims(&dims)?;
    let values = blocks.iter().flat_map(|b| b.values.iter().copied()).collect();
    Ok(Fused { values, layout })
}

/// A fused vector with its class label.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedSample<T = f64> {
    pub features: Vec<T>,
    pub label: usize,
    pub source_id: u64,
}

impl<T: Real> FusedSample<T> {
    pub fn new(features: Vec<T>, label: usize, source_id: u64) -> Result<Self> {
        if label >= NUM_CLASSES {
            return Err(Error::LabelOutOfRange(label));
        }
        Ok(Self { features, label, source_id })
    }
}

/// Per-dimension mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T = f64> {
    pub means: Vec<T>,
    pub stds: Vec<T>,
}

impl<T: Real> Standardizer<T> {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Fits on training samples only.
    pub fn fit(train: &[FusedSample<T>]) -> Result<Self> {
        Self::fit_rows(train.iter().map(|s| s.features.as_slice()))
    }

    pub fn fit_rows<'a>(rows: impl Iterator<Item = &'a [T]> + Clone) -> Result<Self> {
        let n = rows.clone().count();
        if n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: n });
        }
        let dim = rows.clone().next().map_or(0, |r| r.len());
        let mut means = vec![T::zero(); dim];
        let first = rows.clone().next().map(|r| r.to_vec()).unwrap_or_default();
        let mut constant = vec![true; dim];
        for row in rows.clone() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: row.len() });
            }
            for (d, (m, &v)) in means.iter_mut().zip(row).enumerate() {
                *m = *m + v;
                constant[d] &= v == first[d];
            }
        }
        let nf = T::count(n);
        means.iter_mut().for_each(|m| *m = *m / nf);
        let mut vars = vec![T::zero(); dim];
        for row in rows {
            for ((s, &v), &m) in vars.iter_mut().zip(row).zip(&means) {
                *s = *s + (v - m) * (v - m);
            }
        }
        // Exactly constant columns get std 0 regardless of rounding in the mean.
        let stds = vars
            .into_iter()
            .zip(&constant)
            .map(|(s, &c)| if c { T::zero() } else { (s / nf).sqrt() })
            .collect();
        Ok(Self { means, stds })
    }

    /// `(v − mean)/std`, with zero-variance dimensions mapped to 0.
    pub fn apply(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: v.len() });
        }
        Ok(v.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&x, (&m, &s))| if s > T::zero() { (x - m) / s } else { T::zero() })
            .collect())
    }

    pub fn apply_samples(&self, samples: &[FusedSample<T>]) -> Result<Vec<FusedSample<T>>> {
        samples
            .iter()
            .map(|s| Ok(FusedSample { features: self.apply(&s.features)?, label: s.label, source_id: s.source_id }))
            .collect()
    }
}
