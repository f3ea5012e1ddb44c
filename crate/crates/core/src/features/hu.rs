use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::segmentation::BinaryMask;

use super::{BlockKind, FeatureVector};

const LOG_EPS: f64 = 1e-30;

/// `−sign(h)·log10(|h| + ε)`, with `sign(0) = 0`.
pub fn signed_log<T: Real>(h: T) -> T {
    if h == T::zero() {
        return T::zero();
    }
    -h.signum() * (h.abs() + T::lit(LOG_EPS)).log10()
}

/// Integer central moments scaled by `N^(p+q)`:
/// `Σ (N·x − Σx)^p (N·y − Σy)^q`. Exactly translation invariant.
fn scaled_central(mask: &BinaryMask, n: i128, sx: i128, sy: i128) -> Option<[[i128; 4]; 4]> {
    let mut acc = [[0i128; 4]; 4];
    for (x, y) in mask.foreground() {
        let dx = n.checked_mul(x as i128)?.checked_sub(sx)?;
        let dy = n.checked_mul(y as i128)?.checked_sub(sy)?;
        let px = [1, dx, dx.checked_mul(dx)?, dx.checked_mul(dx)?.checked_mul(dx)?];
        let py = [1, dy, dy.checked_mul(dy)?, dy.checked_mul(dy)?.checked_mul(dy)?];
        for p in 0..4 {
            for q in 0..4 - p {
                if p + q >= 2 {
                    acc[p][q] = acc[p][q].checked_add(px[p].checked_mul(py[q])?)?;
                }
            }
        }
    }
    Some(acc)
}

/// Normalized central moments `η_pq` for `2 ≤ p+q ≤ 3`, indexed `[p][q]`.
fn normalized_moments<T: Real>(mask: &BinaryMask) -> Result<[[T; 4]; 4]> {
    let count = mask.count();
    if count == 0 {
        return Err(Error::EmptyImage);
    }
    let (mut sx, mut sy) = (0i128, 0i128);
    for (x, y) in mask.foreground() {
        sx += x as i128;
        sy += y as i128;
    }
    let n = count as i128;
    let nf = T::count(count);
    let mut eta = [[T::zero(); 4]; 4];
    match scaled_central(mask, n, sx, sy) {
        Some(acc) => {
            for p in 0..4 {
                for q in 0..4 - p {
                    let order = (p + q) as f64;
                    if order >= 2.0 {
                        // μ_pq = acc / N^(p+q);  η_pq = μ_pq / N^(1 + (p+q)/2)
                        let denom = nf.powf(T::lit(order + 1.0 + order / 2.0));
                        eta[p][q] = T::lit(acc[p][q] as f64) / denom;
                    }
                }
            }
        }
        None => {
            // Masks too large for exact integer accumulation.
            let (cx, cy) = (sx as f64 / count as f64, sy as f64 / count as f64);
            let mut mu = [[0.0f64; 4]; 4];
            for (x, y) in mask.foreground() {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                for p in 0..4 {
                    for q in 0..4 - p {
                        mu[p][q] += dx.powi(p as i32) * dy.powi(q as i32);
                    }
                }
            }
            for p in 0..4 {
                for q in 0..4 - p {
                    let order = (p + q) as f64;
                    if order >= 2.0 {
                        eta[p][q] = T::lit(mu[p][q]) / nf.powf(T::lit(1.0 + order / 2.0));
                    }
                }
            }
        }
    }
    Ok(eta)
}

/// The seven raw Hu invariants.
pub fn hu_raw<T: Real>(mask: &BinaryMask) -> Result<[T; 7]> {
    let e = normalized_moments::<T>(mask)?;
    let (n20, n02, n11) = (e[2][0], e[0][2], e[1][1]);
    let (n30, n03, n21, n12) = (e[3][0], e[0][3], e[2][1], e[1][2]);
    let c = T::lit;

    let a = n30 + n12;
    let b = n21 + n03;
    let s = n30 - c(3.0) * n12;
    let t = c(3.0) * n21 - n03;

    Ok([
        n20 + n02,
        (n20 - n02).powi(2) + c(4.0) * n11 * n11,
        s * s + t * t,
        a * a + b * b,
        s * a * (a * a - c(3.0) * b * b) + t * b * (c(3.0) * a * a - b * b),
        (n20 - n02) * (a * a - b * b) + c(4.0) * n11 * a * b,
        t * a * (a * a - c(3.0) * b * b) - s * b * (c(3.0) * a * a - b * b),
    ])
}

/// Seven Hu invariants of the mask foreground in signed-log form.
pub fn hu_moments<T: Real>(mask: &BinaryMask) -> Result<FeatureVector<T>> {
    let raw = hu_raw::<T>(mask)?;
    Ok(FeatureVector::new(BlockKind::Hu, raw.iter().map(|&h| signed_log(h)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(w: usize, h: usize, ox: i32, oy: i32) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            let (x, y) = (x as i32 - ox, y as i32 - oy);
            let e1 = ((x - 20) * (x - 20)) * 4 + ((y - 16) * (y - 16)) * 9 < 900;
            let e2 = (x - 30).pow(2) + (y - 26).pow(2) < 49;
            e1 || e2
        })
    }

    #[test]
    fn translation_is_exact() {
        let a = hu_moments::<f64>(&blob(80, 80, 0, 10)).unwrap();
        let b = hu_moments::<f64>(&blob(80, 80, 13, 3)).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn scale_two_nearest_upsample() {
        let small = blob(60, 60, 0, 0);
        let big = BinaryMask::from_fn(120, 120, |x, y| small.get(x / 2, y / 2));
        let a = hu_moments::<f64>(&small).unwrap();
        let b = hu_moments::<f64>(&big).unwrap();
        for (u, v) in a.values.iter().zip(&b.values) {
            assert!((u - v).abs() < 1e-2, "{u} vs {v}");
        }
    }

    #[test]
    fn empty_mask_is_rejected() {
        assert!(matches!(hu_moments::<f64>(&BinaryMask::empty(4, 4)), Err(Error::EmptyImage)));
    }

    #[test]
    fn single_pixel_is_finite() {
        let m = BinaryMask::from_fn(1, 1, |_, _| true);
        let hu = hu_moments::<f64>(&m).unwrap();
        assert!(hu.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn signed_log_values() {
        assert_eq!(signed_log(0.0f64), 0.0);
        assert!((signed_log(1e-3f64) - 3.0).abs() < 1e-12);
        assert!((signed_log(-1e-3f64) + 3.0).abs() < 1e-12);
    }

    #[test]
    fn float_fallback_matches_exact_path() {
        let m = blob(50, 50, 0, 0);
        let exact = hu_raw::<f64>(&m).unwrap();
        // Recompute η directly in floating point as an independent check.
        let pts: Vec<(f64, f64)> = m.foreground().map(|(x, y)| (x as f64, y as f64)).collect();
        let n = pts.len() as f64;
        let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let cy = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let mu = |p: i32, q: i32| pts.iter().map(|(x, y)| (x - cx).powi(p) * (y - cy).powi(q)).sum::<f64>();
        let eta = |p: i32, q: i32| mu(p, q) / n.powf(1.0 + (p + q) as f64 / 2.0);
        let h1 = eta(2, 0) + eta(0, 2);
        let h2 = (eta(2, 0) - eta(0, 2)).powi(2) + 4.0 * eta(1, 1).powi(2);
        assert!((exact[0] - h1).abs() < 1e-12 * h1.abs());
        assert!((exact[1] - h2).abs() < 1e-9 * h2.abs());
    }
}
