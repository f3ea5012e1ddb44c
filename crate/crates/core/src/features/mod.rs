//! Handcrafted descriptor blocks and the [`FeatureVector`] container.

mod color;
mod glcm;
mod hu;
mod ldp;
mod zernike;

pub use color::color_histogram;
pub use glcm::{glcm_matrices, haralick_features, haralick_from_glcm, Angle, GlcmConfig, HARALICK_NAMES};
pub use hu::{hu_moments, hu_raw, signed_log};
pub use ldp::{kirsch_responses, ldp_code, ldp_codes, ldp_features, KIRSCH_MASKS};
pub use zernike::{zernike_dim, zernike_moments, MAX_ZERNIKE_ORDER};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imaging::{to_grayscale, RasterImage};
use crate::scalar::Real;
use crate::segmentation::{apply_mask, BinaryMask};

/// Descriptor families, declared in canonical fusion order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Hu,
    Zernike,
    Haralick,
    Ldp,
    ColorHist,
    Deep,
}

impl BlockKind {
    pub const ALL: [BlockKind; 6] = [
        BlockKind::Hu,
        BlockKind::Zernike,
        BlockKind::Haralick,
        BlockKind::Ldp,
        BlockKind::ColorHist,
        BlockKind::Deep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Hu => "hu",
            BlockKind::Zernike => "zernike",
            BlockKind::Haralick => "haralick",
            BlockKind::Ldp => "ldp",
            BlockKind::ColorHist => "color_hist",
            BlockKind::Deep => "deep",
        }
    }
}

/// One named block of finite real-valued features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector<T = f64> {
    pub kind: BlockKind,
    pub values: Vec<T>,
    /// Set when an extractor substituted a defined value for an undefined
    /// statistic (e.g. Haralick correlation of a flat region).
    pub degenerate: bool,
}

impl<T: Real> FeatureVector<T> {
    pub fn new(kind: BlockKind, values: Vec<T>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()), "{} block has non-finite values", kind.name());
        Self { kind, values, degenerate: false }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn cast<U: Real>(&self) -> FeatureVector<U> {
        FeatureVector {
            kind: self.kind,
            values: self.values.iter().map(|v| U::lit(v.widen())).collect(),
            degenerate: self.degenerate,
        }
    }
}

/// Settings for every handcrafted block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandcraftedParams {
    pub zernike_order: usize,
    pub glcm: GlcmConfig,
    pub ldp_k: usize,
    pub hist_bins: usize,
}

impl Default for HandcraftedParams {
    fn default() -> Self {
        Self { zernike_order: 8, glcm: GlcmConfig::default(), ldp_k: 3, hist_bins: 8 }
    }
}

impl HandcraftedParams {
    /// Dimension of each block, in canonical order.
    pub fn block_dims(&self) -> [(BlockKind, usize); 5] {
        [
            (BlockKind::Hu, 7),
            (BlockKind::Zernike, zernike_dim(self.zernike_order)),
            (BlockKind::Haralick, HARALICK_NAMES.len()),
            (BlockKind::Ldp, binomial(8, self.ldp_k)),
            (BlockKind::ColorHist, self.hist_bins.pow(3)),
        ]
    }

    pub fn total_dim(&self) -> usize {
        self.block_dims().iter().map(|(_, d)| d).sum()
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Computes the five handcrafted blocks of a segmented image.
///
/// Shape moments use the mask, texture blocks use the masked luma, and the
/// color histogram uses the masked color image.
pub fn extract_all<T: Real>(
    img: &RasterImage,
    mask: &BinaryMask,
    params: &HandcraftedParams,
) -> Result<Vec<FeatureVector<T>>> {
    let masked = apply_mask(img, mask)?;
    let gray = to_grayscale(&masked);
    let color = masked.to_rgb();
    Ok(vec![
        hu_moments(mask)?,
        zernike_moments(mask, params.zernike_order)?,
        haralick_features(&gray, mask, &params.glcm)?,
        ldp_features(&gray, mask, params.ldp_k)?,
        color_histogram(&color, mask, params.hist_bins)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn sample() -> (RasterImage, BinaryMask) {
        let img = RasterImage::new(
            40,
            40,
            3,
            (0..40 * 40).flat_map(|i| [(i * 7 % 256) as u8, (i * 13 % 256) as u8, (i % 97) as u8]).collect(),
        )
        .unwrap();
        let mask = BinaryMask::from_fn(40, 40, |x, y| (x as i32 - 20).pow(2) + (y as i32 - 18).pow(2) < 150);
        (img, mask)
    }

    #[test]
    fn default_layout_is_613() {
        let params = HandcraftedParams::default();
        assert_eq!(params.total_dim(), 7 + 25 + 13 + 56 + 512);
        let (img, mask) = sample();
        let blocks = extract_all::<f64>(&img, &mask, &params).unwrap();
        let kinds: Vec<_> = blocks.iter().map(|b| b.kind).collect();
        assert_eq!(kinds, &BlockKind::ALL[..5]);
        assert_eq!(blocks.iter().map(|b| b.dim()).sum::<usize>(), 613);
    }

    #[test]
    fn extraction_is_deterministic() {
        let (img, mask) = sample();
        let params = HandcraftedParams::default();
        let a = extract_all::<f64>(&img, &mask, &params).unwrap();
        let b = extract_all::<f64>(&img, &mask, &params).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let bits = |v: &FeatureVector| v.values.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(x), bits(y));
        }
    }

    #[test]
    fn empty_mask_propagates() {
        let (img, _) = sample();
        let empty = BinaryMask::empty(40, 40);
        assert!(matches!(
            extract_all::<f64>(&img, &empty, &HandcraftedParams::default()),
            Err(Error::EmptyImage)
        ));
    }

    #[test]
    fn single_precision_instantiation() {
        let (img, mask) = sample();
        let blocks = extract_all::<f32>(&img, &mask, &HandcraftedParams::default()).unwrap();
        assert!(blocks.iter().flat_map(|b| &b.values).all(|v| v.is_finite()));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(8, 3), 56);
        assert_eq!(binomial(8, 1), 8);
        assert_eq!(binomial(8, 7), 8);
    }
}
