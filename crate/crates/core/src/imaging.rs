//! Raster containers, decoding, resampling and luma conversion.

use std::path::Path;

use image::{DynamicImage, ImageReader};

use crate::error::{Error, Result};
use crate::scalar::quantize_u8;

/// Side length of the canonical square every record is resized to.
pub const CANONICAL_SIZE: usize = 224;

/// Row-major, channel-interleaved 8-bit image with one or three channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::UnsupportedChannelCount(channels));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "{} samples for {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    /// Image filled with a single color. `color` must have `channels` entries.
    pub fn filled(width: usize, height: usize, color: &[u8]) -> Result<Self> {
        let data = color.iter().copied().cycle().take(width * height * color.len()).collect();
        Self::new(width, height, color.len(), data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    /// Samples of the pixel at column `x`, row `y`.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Promotes a single-channel image to RGB by replication.
    pub fn to_rgb(&self) -> RasterImage {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        RasterImage { width: self.width, height: self.height, channels: 3, data }
    }

    fn to_dynamic(&self) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        match self.channels {
            1 => DynamicImage::ImageLuma8(
                image::GrayImage::from_raw(w, h, self.data.clone()).expect("length checked"),
            ),
            _ => DynamicImage::ImageRgb8(
                image::RgbImage::from_raw(w, h, self.data.clone()).expect("length checked"),
            ),
        }
    }

    /// Writes the image as an 8-bit PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        save_dynamic(&self.to_dynamic(), path.as_ref())
    }
}

/// Row-major 8-bit luma image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!("{} samples for {width}x{height}", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
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
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Sample at signed coordinates with edge replication.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    pub fn into_raster(self) -> RasterImage {
        RasterImage { width: self.width, height: self.height, channels: 1, data: self.data }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.clone().into_raster().save_png(path)
    }
}

fn save_dynamic(img: &DynamicImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(other.to_string())),
    })
}

/// Decodes a PNG or JPEG file into an 8-bit raster.
///
/// Alpha is dropped, 16-bit samples are shifted down to 8 bits, and
/// gray+alpha sources are rejected as two-channel images.
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let decode_err = |reason: String| Error::Decode { path: path.to_path_buf(), reason };
    let reader = ImageReader::open(path)?.with_guessed_format()?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Jpeg) => {}
        other => return Err(decode_err(format!("unsupported format {other:?}"))),
    }
    let decoded = reader.decode().map_err(|e| decode_err(e.to_string()))?;
    from_dynamic(decoded)
}

/// Decodes an in-memory PNG or JPEG buffer.
pub fn decode_image(bytes: &[u8]) -> Result<RasterImage> {
    let decode_err = |reason: String| Error::Decode { path: "<memory>".into(), reason };
    let format = image::guess_format(bytes).map_err(|e| decode_err(e.to_string()))?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Jpeg) {
        return Err(decode_err(format!("unsupported format {format:?}")));
    }
    let decoded =
        image::load_from_memory_with_format(bytes, format).map_err(|e| decode_err(e.to_string()))?;
    from_dynamic(decoded)
}

fn from_dynamic(img: DynamicImage) -> Result<RasterImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let shift16 = |v: &u16| (v >> 8) as u8;
    match img {
        DynamicImage::ImageLuma8(b) => RasterImage::new(w, h, 1, b.into_raw()),
        DynamicImage::ImageRgb8(b) => RasterImage::new(w, h, 3, b.into_raw()),
        DynamicImage::ImageRgba8(b) => {
            let data = b.into_raw().chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect();
            RasterImage::new(w, h, 3, data)
        }
        DynamicImage::ImageLuma16(b) => RasterImage::new(w, h, 1, b.iter().map(shift16).collect()),
        DynamicImage::ImageRgb16(b) => RasterImage::new(w, h, 3, b.iter().map(shift16).collect()),
        DynamicImage::ImageRgba16(b) => {
            let data = b
                .into_raw()
                .chunks_exact(4)
                .flat_map(|p| [(p[0] >> 8) as u8, (p[1] >> 8) as u8, (p[2] >> 8) as u8])
                .collect();
            RasterImage::new(w, h, 3, data)
        }
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            Err(Error::UnsupportedChannelCount(2))
        }
        other => Err(Error::Decode {
            path: "<image>".into(),
            reason: format!("unsupported sample type {:?}", other.color()),
        }),
    }
}

/// Bilinear resampling with half-pixel-centered sample positions.
pub fn resize_bilinear(img: &RasterImage, out_w: usize, out_h: usize) -> Result<RasterImage> {
    if img.is_empty() || out_w == 0 || out_h == 0 {
        return Err(Error::EmptyImage);
    }
    if out_w == img.width && out_h == img.height {
        return Ok(img.clone());
    }
    let ch = img.channels;
    let xs = sample_positions(img.width, out_w);
    let ys = sample_positions(img.height, out_h);
    let mut data = Vec::with_capacity(out_w * out_h * ch);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..ch {
                let at = |x: usize, y: usize| img.data[(y * img.width + x) * ch + c] as f64;
                let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                data.push(quantize_u8(top * (1.0 - fy) + bottom * fy));
            }
        }
    }
    Ok(RasterImage { width: out_w, height: out_h, channels: ch, data })
}

/// Source neighbors and blend weight for every output coordinate along one axis.
fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

/// BT.601 luma, rounded half away from zero. Single-channel input passes through.
pub fn to_grayscale(img: &RasterImage) -> GrayImage {
    let data = if img.channels == 1 {
        img.data.clone()
    } else {
        img.data
            .chunks_exact(3)
            .map(|p| quantize_u8(0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64))
            .collect()
    };
    GrayImage { width: img.width, height: img.height, data }
}

/// Loads, resizes to the canonical square and promotes to RGB.
pub fn load_canonical(path: impl AsRef<Path>) -> Result<RasterImage> {
    let img = load_image(path)?;
    Ok(resize_bilinear(&img, CANONICAL_SIZE, CANONICAL_SIZE)?.to_rgb())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_channel_counts_and_lengths() {
        assert!(matches!(RasterImage::new(2, 2, 2, vec![0; 8]), Err(Error::UnsupportedChannelCount(2))));
        assert!(RasterImage::new(2, 2, 3, vec![0; 11]).is_err());
    }

    #[test]
    fn resize_identity_is_bit_exact() {
        let data: Vec<u8> = (0..224 * 224 * 3).map(|i| (i * 31 % 251) as u8).collect();
        let img = RasterImage::new(224, 224, 3, data).unwrap();
        assert_eq!(resize_bilinear(&img, 224, 224).unwrap(), img);
    }

    #[test]
    fn resize_preserves_constants() {
        let img = RasterImage::filled(2, 2, &[37]).unwrap();
        let out = resize_bilinear(&img, 224, 224).unwrap();
        assert_eq!((out.width(), out.height()), (224, 224));
        assert!(out.data().iter().all(|&v| v == 37));
    }

    #[test]
    fn resize_rejects_empty() {
        let img = RasterImage::new(0, 0, 1, vec![]).unwrap();
        assert!(matches!(resize_bilinear(&img, 4, 4), Err(Error::EmptyImage)));
        let one = RasterImage::filled(1, 1, &[9]).unwrap();
        assert!(matches!(resize_bilinear(&one, 0, 4), Err(Error::EmptyImage)));
    }

    /// Per-pixel reference evaluator written directly from the sampling rule.
    fn reference_bilinear(img: &RasterImage, ow: usize, oh: usize, x: usize, y: usize) -> u8 {
        let sx = ((x as f64 + 0.5) * img.width() as f64 / ow as f64 - 0.5)
            .max(0.0)
            .min((img.width() - 1) as f64);
        let sy = ((y as f64 + 0.5) * img.height() as f64 / oh as f64 - 0.5)
            .max(0.0)
            .min((img.height() - 1) as f64);
        let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(img.width() - 1), (y0 + 1).min(img.height() - 1));
        let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
        let p = |x: usize, y: usize| img.pixel(x, y)[0] as f64;
        let v = p(x0, y0) * (1.0 - fx) * (1.0 - fy)
            + p(x1, y0) * fx * (1.0 - fy)
            + p(x0, y1) * (1.0 - fx) * fy
            + p(x1, y1) * fx * fy;
        v.round() as u8
    }

    #[test]
    fn resize_ramp_matches_reference() {
        let ramp = [0u8, 85, 170, 255];
        let data: Vec<u8> = (0..4).flat_map(|_| ramp).collect();
        let img = RasterImage::new(4, 4, 1, data).unwrap();
        let out = resize_bilinear(&img, 8, 8).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let expected = reference_bilinear(&img, 8, 8, x, y);
                assert_eq!(out.pixel(x, y)[0], expected, "pixel ({x},{y})");
            }
        }
        // Columns 0 and 7 clamp to the ends of the ramp.
        assert_eq!(out.pixel(0, 3)[0], 0);
        assert_eq!(out.pixel(7, 3)[0], 255);
    }

    #[test]
    fn grayscale_anchors() {
        let img = RasterImage::new(3, 1, 3, vec![255, 255, 255, 255, 0, 0, 0, 0, 0]).unwrap();
        assert_eq!(to_grayscale(&img).data(), &[255, 76, 0]);
        let gray = RasterImage::new(2, 1, 1, vec![7, 200]).unwrap();
        assert_eq!(to_grayscale(&gray).data(), &[7, 200]);
    }

    #[test]
    fn decode_rejects_truncated_png() {
        let img = RasterImage::filled(10, 8, &[10, 20, 30]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        img.save_png(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_image(&path), Err(Error::Decode { .. })));
        assert!(matches!(load_image(dir.path().join("nope.png")), Err(Error::FileNotFound(_))));
    }
}
