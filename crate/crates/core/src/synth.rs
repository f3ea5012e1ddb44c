//! Seeded synthetic data: Gaussian blobs for the classifiers and fundus-like
//! images for end-to-end runs.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dataset::CLASS_NAMES;
use crate::error::Result;
use crate::fusion::{FusedSample, NUM_CLASSES};
use crate::imaging::{RasterImage, CANONICAL_SIZE};
use crate::scalar::Real;

/// `per_class` unit-variance points around each of five centers. Centers sit
/// on a circle in the first two coordinates, adjacent ones `separation`
/// apart. Labels cycle `0, 1, 2, 3, 4, 0, ...`.
pub fn gaussian_blobs<T: Real>(per_class: usize, dim: usize, separation: f64, seed: u64) -> Vec<FusedSample<T>> {
    assert!(dim >= 2, "blobs need at least two dimensions");
    let radius = separation / (2.0 * (PI / NUM_CLASSES as f64).sin());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..per_class * NUM_CLASSES)
        .map(|i| {
            let c = i % NUM_CLASSES;
            let angle = 2.0 * PI * c as f64 / NUM_CLASSES as f64;
            let features = (0..dim)
                .map(|j| {
                    let center = match j {
                        0 => radius * angle.cos(),
                        1 => radius * angle.sin(),
                        _ => 0.0,
                    };
                    let z: f64 = StandardNormal.sample(&mut rng);
                    T::lit(center + z)
                })
                .collect();
            FusedSample { features, label: c, source_id: i as u64 }
        })
        .collect()
}

/// Texture period in pixels for each grade.
const PERIODS: [f64; NUM_CLASSES] = [28.0, 17.0, 11.0, 7.0, 4.5];
/// Lesion colors.
const HEMORRHAGE: [f64; 3] = [48.0, 6.0, 4.0];
const EXUDATE: [f64; 3] = [240.0, 208.0, 80.0];
/// Lesion count for each grade.
const LESIONS: [usize; NUM_CLASSES] = [0, 4, 9, 16, 26];

/// A 224×224 fundus-like image: a textured reddish disk on black, with a
/// grade-dependent stripe frequency and number of lesions.
pub fn fundus_image(class: usize, seed: u64) -> RasterImage {
    let s = CANONICAL_SIZE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = s as f64 / 2.0;
    let radius = rng.random_range(99.0..101.0);
    let theta = rng.random_range(-PI / 12.0..PI / 12.0);
    let phase = rng.random_range(0.0..2.0 * PI);
    let period = PERIODS[class] * rng.random_range(0.97..1.03);
    let gain = rng.random_range(0.95..1.05);
    let base = [rng.random_range(190.0..200.0), rng.random_range(15.0..17.0), rng.random_range(7.0..9.0)];
    let lesions: Vec<(f64, f64, f64)> = (0..LESIONS[class])
        .map(|_| {
            let r = radius * 0.8 * rng.random::<f64>().sqrt();
            let a = rng.random_range(0.0..2.0 * PI);
            (c + r * a.cos(), c + r * a.sin(), rng.random_range(5.0..9.0))
        })
        .collect();
    let noise = Normal::new(0.0, 2.0).expect("valid sigma");
    let (ct, st) = (theta.cos(), theta.sin());
    let mut data = Vec::with_capacity(s * s * 3);
    for y in 0..s {
        for x in 0..s {
            let (dx, dy) = (x as f64 + 0.5 - c, y as f64 + 0.5 - c);
            let r = (dx * dx + dy * dy).sqrt();
            if r > radius {
                data.extend_from_slice(&[0, 0, 0]);
                continue;
            }
            // Vignetting toward the rim and a stripe texture.
            let vignette = 1.0 - 0.35 * (r / radius).powi(2);
            let stripe = 1.0 + 0.22 * (2.0 * PI * (dx * ct + dy * st) / period + phase).sin();
            let shade = gain * vignette * stripe;
            // Flat-colored spots: even lesions are hemorrhages, odd ones exudates.
            let spot = lesions
                .iter()
                .enumerate()
                .find(|(_, &(lx, ly, lr))| (x as f64 - lx).powi(2) + (y as f64 - ly).powi(2) < lr * lr)
                .map(|(i, _)| if i % 2 == 0 { HEMORRHAGE } else { EXUDATE });
            for ch in 0..3 {
                let v = spot.map_or(base[ch] * shade, |c| c[ch]) + noise.sample(&mut rng);
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RasterImage::new(s, s, 3, data).expect("consistent buffer")
}

/// Writes `per_class` PNGs per grade under `root/<class name>/`.
pub fn write_fundus_dataset(root: &Path, per_class: usize, seed: u64) -> Result<()> {
    use rayon::prelude::*;
    for (class, name) in CLASS_NAMES.iter().enumerate() {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir)?;
        (0..per_class).into_par_iter().try_for_each(|i| {
            let img_seed = seed.wrapping_mul(1_000_003).wrapping_add((class * 100_000 + i) as u64);
            fundus_image(class, img_seed).save_png(dir.join(format!("img_{i:04}.png")))
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_centers_are_separated() {
        let pts = gaussian_blobs::<f64>(200, 3, 5.0, 1);
        let mut means = [[0.0; 2]; NUM_CLASSES];
        for p in &pts {
            means[p.label][0] += p.features[0] / 200.0;
            means[p.label][1] += p.features[1] / 200.0;
        }
        let d = ((means[0][0] - means[1][0]).powi(2) + (means[0][1] - means[1][1]).powi(2)).sqrt();
        assert!((d - 5.0).abs() < 0.5, "{d}");
    }

    #[test]
    fn images_are_deterministic() {
        assert_eq!(fundus_image(2, 9), fundus_image(2, 9));
        assert_ne!(fundus_image(2, 9), fundus_image(2, 10));
        let img = fundus_image(4, 1);
        assert_eq!(img.pixel(0, 0), &[0, 0, 0]);
        assert!(img.pixel(112, 112)[0] > 60);
    }
}
