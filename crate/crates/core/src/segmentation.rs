//! Region-of-interest extraction: Gaussian blur, local-mean adaptive
//! thresholding and morphological opening.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{to_grayscale, GrayImage, RasterImage};
use crate::scalar::quantize_u8;

/// Row-major {0,1} mask, 1 marking the region of interest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!("{} mask samples for {width}x{height}", data.len())));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidImage("mask values must be 0 or 1".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![1; width * height] }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y) as u8);
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    /// Foreground coordinates in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data.iter().enumerate().filter(|(_, &v)| v == 1).map(move |(i, _)| (i % w, i / w))
    }

    /// Exports the mask as an 8-bit PNG with foreground at 255.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let data = self.data.iter().map(|&v| v * 255).collect();
        GrayImage::new(self.width, self.height, data)?.save_png(path)
    }
}

/// Parameters of the segmentation chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    /// Odd side length of the Gaussian kernel.
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    /// Odd side length of the local-mean neighborhood.
    pub block_size: usize,
    /// Constant subtracted from the local mean.
    pub threshold_offset: f64,
    pub opening_radius: usize,
    /// Blurred luma at or below this level is never region of interest.
    /// Keeps the dark surround of a fundus photograph out of the mask.
    pub background_level: u8,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            blur_kernel: 5,
            blur_sigma: 1.0,
            block_size: 51,
            threshold_offset: 2.0,
            opening_radius: 2,
            background_level: 8,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blur_kernel % 2 == 0 {
            return Err(Error::InvalidKernel { kernel: self.blur_kernel, width: 0, height: 0 });
        }
        if !(self.blur_sigma > 0.0) {
            return Err(Error::InvalidSigma(self.blur_sigma));
        }
        if self.block_size < 3 || self.block_size % 2 == 0 {
            return Err(Error::InvalidBlockSize(self.block_size));
        }
        if self.opening_radius == 0 {
            return Err(Error::InvalidRadius(0));
        }
        Ok(())
    }
}

/// Normalized 1-D Gaussian weights of odd length `kernel`.
pub fn gaussian_kernel(kernel: usize, sigma: f64) -> Vec<f64> {
    let half = (kernel / 2) as isize;
    let raw: Vec<f64> =
        (-half..=half).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Separable Gaussian smoothing with edge replication.
///
/// Both passes accumulate in `f64`; only the final result is re-quantized.
pub fn gaussian_blur(img: &GrayImage, kernel: usize, sigma: f64) -> Result<GrayImage> {
    let (w, h) = (img.width(), img.height());
    if kernel % 2 == 0 || kernel == 0 || kernel > w.min(h) {
        return Err(Error::InvalidKernel { kernel, width: w, height: h });
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidSigma(sigma));
    }
    let weights = gaussian_kernel(kernel, sigma);
    let half = (kernel / 2) as isize;

    let mut horizontal = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            horizontal[y * w + x] = weights
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * img.get_clamped(x as isize + k as isize - half, y as isize) as f64)
                .sum();
        }
    }
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let v: f64 = weights
                .iter()
                .enumerate()
                .map(|(k, wk)| {
                    let yy = (y as isize + k as isize - half).clamp(0, h as isize - 1) as usize;
                    wk * horizontal[yy * w + x]
                })
                .sum();
            out.push(quantize_u8(v));
        }
    }
    GrayImage::new(w, h, out)
}

/// Sums of each `block`-wide window along rows, with edge replication.
fn box_sums(img: &GrayImage, block: usize) -> Vec<u64> {
    let (w, h) = (img.width(), img.height());
    let half = (block / 2) as isize;
    let mut rows = vec![0u64; w * h];
    for y in 0..h {
        for x in 0..w {
            rows[y * w + x] = (-half..=half)
                .map(|d| img.get_clamped(x as isize + d, y as isize) as u64)
                .sum();
        }
    }
    let mut out = vec![0u64; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (-half..=half)
                .map(|d| rows[(y as isize + d).clamp(0, h as isize - 1) as usize * w + x])
                .sum();
        }
    }
    out
}

/// Marks pixels brighter than their local mean minus `offset`.
///
/// The neighborhood is the `block_size`-square centred on the pixel with
/// edge replication; sums are exact integers.
pub fn adaptive_threshold(img: &GrayImage, block_size: usize, offset: f64) -> Result<BinaryMask> {
    if block_size < 3 || block_size % 2 == 0 {
        return Err(Error::InvalidBlockSize(block_size));
    }
    let area = (block_size * block_size) as f64;
    let sums = box_sums(img, block_size);
    let data = img
        .data()
        .iter()
        .zip(&sums)
        .map(|(&v, &s)| (v as f64 > s as f64 / area - offset) as u8)
        .collect();
    BinaryMask::new(img.width(), img.height(), data)
}

/// One separable pass of square erosion (`erode`) or dilation along an axis.
/// Pixels outside the image count as background.
fn morph_pass(src: &[u8], w: usize, h: usize, radius: usize, horizontal: bool, erode: bool) -> Vec<u8> {
    let (len, lines) = if horizontal { (w, h) } else { (h, w) };
    let at = |line: usize, i: usize| if horizontal { line * w + i } else { i * w + line };
    let mut out = vec![0u8; w * h];
    let mut prefix = vec![0usize; len + 1];
    for line in 0..lines {
        for i in 0..len {
            prefix[i + 1] = prefix[i] + src[at(line, i)] as usize;
        }
        for i in 0..len {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(len - 1);
            let ones = prefix[hi + 1] - prefix[lo];
            out[at(line, i)] = if erode { (ones == 2 * radius + 1) as u8 } else { (ones > 0) as u8 };
        }
    }
    out
}

pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    let rows = morph_pass(&mask.data, w, h, radius, true, true);
    BinaryMask { width: w, height: h, data: morph_pass(&rows, w, h, radius, false, true) }
}

pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    let rows = morph_pass(&mask.data, w, h, radius, true, false);
    BinaryMask { width: w, height: h, data: morph_pass(&rows, w, h, radius, false, false) }
}

/// Erosion followed by dilation with a `(2·radius+1)`-square element.
pub fn morphological_open(mask: &BinaryMask, radius: usize) -> Result<BinaryMask> {
    if radius == 0 {
        return Err(Error::InvalidRadius(radius));
    }
    Ok(dilate(&erode(mask, radius), radius))
}

/// Zeroes every channel of the pixels outside `mask`.
pub fn apply_mask(img: &RasterImage, mask: &BinaryMask) -> Result<RasterImage> {
    if img.width() != mask.width || img.height() != mask.height {
        return Err(Error::InvalidImage("mask and image sizes differ".into()));
    }
    let ch = img.channels();
    let mut out = img.clone();
    for (px, &m) in out.data_mut().chunks_exact_mut(ch).zip(&mask.data) {
        if m == 0 {
            px.fill(0);
        }
    }
    Ok(out)
}

/// Full chain: luma, blur, threshold, background gate, opening.
///
/// Returns the mask and the color image with background zeroed. Fails with
/// [`Error::EmptyRoi`] when nothing survives.
pub fn segment(img: &RasterImage, cfg: &SegmentationConfig) -> Result<(BinaryMask, RasterImage)> {
    cfg.validate()?;
    if img.is_empty() {
        return Err(Error::EmptyImage);
    }
    let gray = to_grayscale(img);
    let blurred = gaussian_blur(&gray, cfg.blur_kernel, cfg.blur_sigma)?;
    let mut mask = adaptive_threshold(&blurred, cfg.block_size, cfg.threshold_offset)?;
    for (m, &v) in mask.data.iter_mut().zip(blurred.data()) {
        if v <= cfg.background_level {
            *m = 0;
        }
    }
    let opened = morphological_open(&mask, cfg.opening_radius)?;
    if opened.count() == 0 {
        return Err(Error::EmptyRoi);
    }
    let masked = apply_mask(img, &opened)?;
    Ok((opened, masked))
}

/// Outcome of [`segment_or_full`].
#[derive(Clone, Debug)]
pub struct Segmented {
    pub mask: BinaryMask,
    pub masked: RasterImage,
    /// True when the chain found no foreground and the full frame was used.
    pub fell_back: bool,
}

/// [`segment`], substituting the full-image mask for an empty result.
pub fn segment_or_full(img: &RasterImage, cfg: &SegmentationConfig) -> Result<Segmented> {
    match segment(img, cfg) {
        Ok((mask, masked)) => Ok(Segmented { mask, masked, fell_back: false }),
        Err(Error::EmptyRoi) => {
            log::warn!("empty region of interest, falling back to the full image");
            Ok(Segmented {
                mask: BinaryMask::full(img.width(), img.height()),
                masked: img.clone(),
                fell_back: true,
            })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn blur_keeps_constants() {
        let img = GrayImage::filled(9, 7, 128);
        for k in [1, 3, 5, 7] {
            assert!(gaussian_blur(&img, k, 1.3).unwrap().data().iter().all(|&v| v == 128));
        }
    }

    #[test]
    fn blur_impulse_matches_kernel_weights() {
        let img = GrayImage::from_fn(7, 7, |x, y| if (x, y) == (3, 3) { 255 } else { 0 });
        let out = gaussian_blur(&img, 3, 1.0).unwrap();
        // Oracle: 2-D weights written out from exp(-(dx²+dy²)/2).
        let e = (-0.5f64).exp();
        let total = (1.0 + 2.0 * e).powi(2);
        for dy in -1i32..=1 {
            for dx in -1i32..=1 {
                let w = (-((dx * dx + dy * dy) as f64) / 2.0).exp() / total;
                let expected = (255.0 * w).round() as u8;
                assert_eq!(out.get((3 + dx) as usize, (3 + dy) as usize), expected, "offset ({dx},{dy})");
            }
        }
        assert_eq!(out.get(0, 0), 0);
    }

    #[test]
    fn blur_rejects_bad_parameters() {
        let img = GrayImage::filled(8, 8, 1);
        assert!(matches!(gaussian_blur(&img, 4, 1.0), Err(Error::InvalidKernel { .. })));
        assert!(matches!(gaussian_blur(&img, 9, 1.0), Err(Error::InvalidKernel { .. })));
        assert!(matches!(gaussian_blur(&img, 3, 0.0), Err(Error::InvalidSigma(_))));
    }

    #[test]
    fn threshold_on_constant_images() {
        let img = GrayImage::filled(12, 12, 90);
        assert_eq!(adaptive_threshold(&img, 5, 2.0).unwrap().count(), 144);
        assert_eq!(adaptive_threshold(&img, 5, -2.0).unwrap().count(), 0);
        assert!(matches!(adaptive_threshold(&img, 4, 0.0), Err(Error::InvalidBlockSize(4))));
        assert!(matches!(adaptive_threshold(&img, 1, 0.0), Err(Error::InvalidBlockSize(1))));
    }

    /// Brute-force O(n·b²) neighborhood mean with edge replication.
    fn brute_threshold(img: &GrayImage, block: usize, offset: f64) -> Vec<u8> {
        let half = (block / 2) as isize;
        let mut out = Vec::new();
        for y in 0..img.height() as isize {
            for x in 0..img.width() as isize {
                let mut sum = 0u64;
                for dy in -half..=half {
                    for dx in -half..=half {
                        sum += img.get_clamped(x + dx, y + dy) as u64;
                    }
                }
                let t = sum as f64 / (block * block) as f64 - offset;
                out.push((img.get(x as usize, y as usize) as f64 > t) as u8);
            }
        }
        out
    }

    #[test]
    fn threshold_bright_square_matches_brute_force() {
        let img = GrayImage::from_fn(64, 64, |x, y| {
            if (24..40).contains(&x) && (24..40).contains(&y) { 200 } else { 10 }
        });
        let mask = adaptive_threshold(&img, 31, 5.0).unwrap();
        assert_eq!(mask.data(), brute_threshold(&img, 31, 5.0).as_slice());
        // The square itself is foreground and the far field is not.
        assert!(mask.get(31, 31));
        assert!(!mask.get(20, 31));
    }

    proptest! {
        #[test]
        fn threshold_agrees_with_brute_force(
            w in 1usize..40, h in 1usize..40, seed in any::<u64>(),
            block in prop::sample::select(vec![3usize, 5, 7, 11, 31]),
            offset in -10.0f64..10.0,
        ) {
            let mut s = seed;
            let img = GrayImage::from_fn(w, h, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 56) as u8
            });
            let mask = adaptive_threshold(&img, block, offset).unwrap();
            let expected = brute_threshold(&img, block, offset);
            prop_assert_eq!(mask.data(), expected.as_slice());
        }

        #[test]
        fn opening_is_idempotent_and_shrinking(
            w in 1usize..32, h in 1usize..32, bits in prop::collection::vec(any::<bool>(), 32 * 32),
            radius in 1usize..3,
        ) {
            let mask = BinaryMask::from_fn(w, h, |x, y| bits[y * 32 + x]);
            let once = morphological_open(&mask, radius).unwrap();
            let twice = morphological_open(&once, radius).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.count() <= mask.count());
            prop_assert!(once.data().iter().all(|&v| v <= 1));
        }

        #[test]
        fn blur_preserves_mean(w in 32usize..64, h in 32usize..64, seed in any::<u64>(),
                               kernel in prop::sample::select(vec![1usize, 3, 5, 7, 9])) {
            let mut s = seed;
            let img = GrayImage::from_fn(w, h, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 56) as u8
            });
            let out = gaussian_blur(&img, kernel, 1.5).unwrap();
            let mean = |d: &[u8]| d.iter().map(|&v| v as f64).sum::<f64>() / d.len() as f64;
            prop_assert!((mean(img.data()) - mean(out.data())).abs() <= 1.0);
        }
    }

    /// Brute-force opening straight from the set definitions.
    fn brute_open(mask: &BinaryMask, r: isize) -> BinaryMask {
        let (w, h) = (mask.width() as isize, mask.height() as isize);
        let inside = |x: isize, y: isize| x >= 0 && y >= 0 && x < w && y < h;
        let eroded = BinaryMask::from_fn(w as usize, h as usize, |x, y| {
            (-r..=r).all(|dy| {
                (-r..=r).all(|dx| {
                    let (xx, yy) = (x as isize + dx, y as isize + dy);
                    inside(xx, yy) && mask.get(xx as usize, yy as usize)
                })
            })
        });
        BinaryMask::from_fn(w as usize, h as usize, |x, y| {
            (-r..=r).any(|dy| {
                (-r..=r).any(|dx| {
                    let (xx, yy) = (x as isize + dx, y as isize + dy);
                    inside(xx, yy) && eroded.get(xx as usize, yy as usize)
                })
            })
        })
    }

    #[test]
    fn opening_anchors() {
        let dot = BinaryMask::from_fn(9, 9, |x, y| (x, y) == (4, 4));
        assert_eq!(morphological_open(&dot, 1).unwrap().count(), 0);

        let square = BinaryMask::from_fn(16, 16, |x, y| (3..13).contains(&x) && (3..13).contains(&y));
        let opened = morphological_open(&square, 1).unwrap();
        assert_eq!(opened, square);
        assert_eq!(opened, brute_open(&square, 1));
        assert!(matches!(morphological_open(&square, 0), Err(Error::InvalidRadius(0))));

        // A square touching the border survives as well.
        let corner = BinaryMask::from_fn(12, 12, |x, y| x < 6 && y < 6);
        assert_eq!(morphological_open(&corner, 2).unwrap(), brute_open(&corner, 2));
    }

    #[test]
    fn segment_bright_disk() {
        let (cx, cy, r) = (112.0, 112.0, 80.0);
        let inside = |x: usize, y: usize| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            dx * dx + dy * dy <= r * r
        };
        let disk = BinaryMask::from_fn(224, 224, inside);
        let img = RasterImage::new(
            224,
            224,
            3,
            (0..224 * 224)
                .flat_map(|i| if inside(i % 224, i / 224) { [220, 140, 60] } else { [0, 0, 0] })
                .collect(),
        )
        .unwrap();
        let (mask, masked) = segment(&img, &SegmentationConfig::default()).unwrap();
        let interior = erode(&disk, 2);
        let shell = dilate(&disk, 2);
        for y in 0..224 {
            for x in 0..224 {
                if interior.get(x, y) {
                    assert!(mask.get(x, y), "interior pixel ({x},{y}) lost");
                }
                if mask.get(x, y) {
                    assert!(shell.get(x, y), "pixel ({x},{y}) outside dilated disk");
                } else {
                    assert_eq!(masked.pixel(x, y), &[0, 0, 0]);
                }
            }
        }
    }

    #[test]
    fn segment_degenerate_inputs() {
        let cfg = SegmentationConfig::default();
        let black = RasterImage::filled(224, 224, &[0, 0, 0]).unwrap();
        assert!(matches!(segment(&black, &cfg), Err(Error::EmptyRoi)));
        let fallback = segment_or_full(&black, &cfg).unwrap();
        assert!(fallback.fell_back);
        assert_eq!(fallback.mask.count(), 224 * 224);

        let white = RasterImage::filled(224, 224, &[255, 255, 255]).unwrap();
        let (mask, masked) = segment(&white, &cfg).unwrap();
        assert_eq!(mask.count(), 224 * 224);
        assert_eq!(masked, white);

        let negative = SegmentationConfig { threshold_offset: -2.0, ..cfg };
        assert!(matches!(segment(&white, &negative), Err(Error::EmptyRoi)));
    }

    #[test]
    fn mask_png_export() {
        let dir = tempfile::tempdir().unwrap();
        let mask = BinaryMask::from_fn(5, 4, |x, _| x > 2);
        let path = dir.path().join("m.png");
        mask.save_png(&path).unwrap();
        let back = crate::imaging::load_image(&path).unwrap();
        assert_eq!(back.channels(), 1);
        assert_eq!(back.pixel(4, 0), &[255]);
        assert_eq!(back.pixel(0, 0), &[0]);
    }
}
