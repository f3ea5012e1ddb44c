use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::segmentation::BinaryMask;

use super::{BlockKind, FeatureVector};

/// Highest supported order. Radial polynomials above this lose precision to
/// cancellation in double arithmetic.
pub const MAX_ZERNIKE_ORDER: usize = 30;

/// Number of `(n, m)` pairs with `n ≤ max_order`, `m ≥ 0`, `n − m` even.
pub fn zernike_dim(max_order: usize) -> usize {
    (0..=max_order).map(|n| n / 2 + 1).sum()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Coefficients of `R_nm(ρ)` as `(power, coefficient)` pairs.
fn radial_terms(n: usize, m: usize) -> Vec<(usize, f64)> {
    let half_sum = (n + m) / 2;
    let half_diff = (n - m) / 2;
    (0..=half_diff)
        .map(|s| {
            let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
            let c = sign * factorial(n - s)
                / (factorial(s) * factorial(half_sum - s) * factorial(half_diff - s));
            (n - 2 * s, c)
        })
        .collect()
}

/// Zernike moment magnitudes `|Z(n,m)|` of the mask foreground.
///
/// Pixels are mapped into the unit disk centred at the foreground centroid
/// with radius equal to the farthest foreground pixel (at least one pixel).
/// Each pixel contributes area `1/R²`. Output is ordered by `(n, m)`.
pub fn zernike_moments<T: Real>(mask: &BinaryMask, max_order: usize) -> Result<FeatureVector<T>> {
    if max_order > MAX_ZERNIKE_ORDER {
        return Err(Error::InvalidOrder(max_order));
    }
    let count = mask.count();
    if count == 0 {
        return Err(Error::EmptyImage);
    }
    let (mut sx, mut sy) = (0u64, 0u64);
    for (x, y) in mask.foreground() {
        sx += x as u64;
        sy += y as u64;
    }
    let n_px = T::count(count);
    let cx = T::lit(sx as f64) / n_px;
    let cy = T::lit(sy as f64) / n_px;

    let offsets: Vec<(T, T)> =
        mask.foreground().map(|(x, y)| (T::count(x) - cx, T::count(y) - cy)).collect();
    let radius = offsets
        .iter()
        .map(|&(dx, dy)| (dx * dx + dy * dy).sqrt())
        .fold(T::zero(), T::max)
        .max(T::one());

    let pairs: Vec<(usize, usize)> = (0..=max_order)
        .flat_map(|n| (0..=n).filter(move |m| (n - m) % 2 == 0).map(move |m| (n, m)))
        .collect();
    let terms: Vec<Vec<(usize, T)>> = pairs
        .iter()
        .map(|&(n, m)| radial_terms(n, m).into_iter().map(|(p, c)| (p, T::lit(c))).collect())
        .collect();

    let mut re = vec![T::zero(); pairs.len()];
    let mut im = vec![T::zero(); pairs.len()];
    let mut rho_pow = vec![T::one(); max_order + 1];
    let mut cos_m = vec![T::one(); max_order + 1];
    let mut sin_m = vec![T::zero(); max_order + 1];
    for &(dx, dy) in &offsets {
        let rho = (dx * dx + dy * dy).sqrt() / radius;
        let theta = dy.atan2(dx);
        for k in 1..=max_order {
            rho_pow[k] = rho_pow[k - 1] * rho;
            let mk = T::count(k) * theta;
            cos_m[k] = mk.cos();
            sin_m[k] = mk.sin();
        }
        for (i, &(_, m)) in pairs.iter().enumerate() {
            let r: T = terms[i].iter().map(|&(p, c)| c * rho_pow[p]).sum();
            re[i] = re[i] + r * cos_m[m];
            im[i] = im[i] - r * sin_m[m];
        }
    }

    let area = T::one() / (radius * radius);
    let pi = T::lit(std::f64::consts::PI);
    let values = pairs
        .iter()
        .enumerate()
        .map(|(i, &(n, _))| {
            let scale = T::count(n + 1) / pi * area;
            (re[i] * re[i] + im[i] * im[i]).sqrt() * scale
        })
        .collect();
    Ok(FeatureVector::new(BlockKind::Zernike, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_enumeration() {
        // Brute-force count of admissible (n, m) pairs.
        for order in 0..12 {
            let brute = (0..=order)
                .flat_map(|n| (0..=n).map(move |m| (n, m)))
                .filter(|(n, m)| (n - m) % 2 == 0)
                .count();
            assert_eq!(zernike_dim(order), brute);
        }
        assert_eq!(zernike_dim(8), 25);
    }

    #[test]
    fn radial_polynomial_known_forms() {
        // R_2^0 = 2ρ² − 1, R_4^2 = 4ρ⁴ − 3ρ²
        assert_eq!(radial_terms(2, 0), vec![(2, 2.0), (0, -1.0)]);
        assert_eq!(radial_terms(4, 2), vec![(4, 4.0), (2, -3.0)]);
        assert_eq!(radial_terms(3, 3), vec![(3, 1.0)]);
    }

    #[test]
    fn centered_disk_is_rotationally_flat() {
        let mask = BinaryMask::from_fn(101, 101, |x, y| (x as i32 - 50).pow(2) + (y as i32 - 50).pow(2) <= 40 * 40);
        let z = zernike_moments::<f64>(&mask, 8).unwrap();
        assert_eq!(z.dim(), 25);
        let z00 = z.values[0];
        assert!(z00 > 0.0);
        let mut i = 0;
        for n in 0..=8usize {
            for m in (0..=n).filter(|m| (n - m) % 2 == 0) {
                if m != 0 {
                    assert!(z.values[i] < 0.05 * z00, "Z({n},{m}) = {}", z.values[i]);
                }
                i += 1;
            }
        }
    }

    #[test]
    fn rotation_by_quarter_turn() {
        let mask = BinaryMask::from_fn(70, 60, |x, y| {
            let (x, y) = (x as i32, y as i32);
            (x - 25).pow(2) * 3 + (y - 30).pow(2) < 500 || ((40..55).contains(&x) && (10..22).contains(&y))
        });
        let rotated = BinaryMask::from_fn(60, 70, |x, y| mask.get(y, 59 - x));
        let a = zernike_moments::<f64>(&mask, 8).unwrap();
        let b = zernike_moments::<f64>(&rotated, 8).unwrap();
        for (u, v) in a.values.iter().zip(&b.values) {
            assert!((u - v).abs() <= 1e-6 * u.abs().max(v.abs()) + 1e-12, "{u} vs {v}");
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(zernike_moments::<f64>(&BinaryMask::empty(3, 3), 4), Err(Error::EmptyImage)));
        let m = BinaryMask::full(3, 3);
        assert!(matches!(zernike_moments::<f64>(&m, 31), Err(Error::InvalidOrder(31))));
        assert_eq!(zernike_moments::<f64>(&m, 0).unwrap().dim(), 1);
    }
}
