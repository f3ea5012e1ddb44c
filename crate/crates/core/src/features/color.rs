use crate::error::{Error, Result};
use crate::imaging::RasterImage;
use crate::scalar::Real;
use crate::segmentation::BinaryMask;

use super::{BlockKind, FeatureVector};

/// Joint RGB histogram of the ROI pixels, normalized to sum 1 and flattened
/// R-major, then G, then B.
pub fn color_histogram<T: Real>(img: &RasterImage, roi: &BinaryMask, bins_per_channel: usize) -> Result<FeatureVector<T>> {
    if img.channels() != 3 {
        return Err(Error::NotColorImage);
    }
    if !(2..=256).contains(&bins_per_channel) {
        return Err(Error::InvalidDescriptorConfig(format!(
            "histogram bins per channel {bins_per_channel} not in 2..=256"
        )));
    }
    if roi.width() != img.width() || roi.height() != img.height() {
        return Err(Error::InvalidImage("ROI and image sizes differ".into()));
    }
    let b = bins_per_channel;
    let bin = |v: u8| v as usize * b / 256;
    let mut counts = vec![0u64; b * b * b];
    let mut total = 0u64;
    for (x, y) in roi.foreground() {
        let p = img.pixel(x, y);
        counts[(bin(p[0]) * b + bin(p[1])) * b + bin(p[2])] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::EmptyRoi);
    }
    let t = T::lit(total as f64);
    Ok(FeatureVector::new(BlockKind::ColorHist, counts.iter().map(|&c| T::lit(c as f64) / t).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(r: usize, g: usize, b: usize) -> usize {
        (r * 8 + g) * 8 + b
    }

    #[test]
    fn uniform_red() {
        let img = RasterImage::filled(6, 4, &[255, 0, 0]).unwrap();
        let h = color_histogram::<f64>(&img, &BinaryMask::full(6, 4), 8).unwrap();
        assert_eq!(h.dim(), 512);
        assert_eq!(h.values[idx(7, 0, 0)], 1.0);
        assert_eq!(h.values.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn two_pixel_roi() {
        let img = RasterImage::new(3, 1, 3, vec![255, 0, 0, 0, 255, 0, 9, 9, 9]).unwrap();
        let roi = BinaryMask::new(3, 1, vec![1, 1, 0]).unwrap();
        let h = color_histogram::<f64>(&img, &roi, 8).unwrap();
        assert_eq!(h.values[idx(7, 0, 0)], 0.5);
        assert_eq!(h.values[idx(0, 7, 0)], 0.5);
    }

    #[test]
    fn permutation_invariant() {
        let px: Vec<[u8; 3]> = (0..20u32).map(|i| [(i * 40 % 256) as u8, (i * 77 % 256) as u8, (i * 5) as u8]).collect();
        let a = RasterImage::new(20, 1, 3, px.iter().flatten().copied().collect()).unwrap();
        let b = RasterImage::new(20, 1, 3, px.iter().rev().flatten().copied().collect()).unwrap();
        let roi = BinaryMask::full(20, 1);
        assert_eq!(
            color_histogram::<f64>(&a, &roi, 8).unwrap().values,
            color_histogram::<f64>(&b, &roi, 8).unwrap().values
        );
    }

    #[test]
    fn errors() {
        let gray = RasterImage::filled(2, 2, &[1]).unwrap();
        assert!(matches!(color_histogram::<f64>(&gray, &BinaryMask::full(2, 2), 8), Err(Error::NotColorImage)));
        let rgb = RasterImage::filled(2, 2, &[1, 2, 3]).unwrap();
        assert!(matches!(color_histogram::<f64>(&rgb, &BinaryMask::empty(2, 2), 8), Err(Error::EmptyRoi)));
        assert!(color_histogram::<f64>(&rgb, &BinaryMask::full(2, 2), 1).is_err());
    }
}
