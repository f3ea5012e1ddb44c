use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::scalar::Real;
use crate::segmentation::BinaryMask;

use super::{BlockKind, FeatureVector};

/// Row-major 3×3 positions of the eight neighbors, clockwise from East.
const RING: [usize; 8] = [5, 8, 7, 6, 3, 0, 1, 2];

const fn kirsch(dir: usize) -> [i32; 9] {
    let mut m = [0i32; 9];
    let mut k = 0;
    while k < 8 {
        let d = (k + 8 - dir) % 8;
        m[RING[k]] = if d == 0 || d == 1 || d == 7 { 5 } else { -3 };
        k += 1;
    }
    m
}

/// Kirsch compass masks, index 0 = East, proceeding clockwise.
pub const KIRSCH_MASKS: [[i32; 9]; 8] =
    [kirsch(0), kirsch(1), kirsch(2), kirsch(3), kirsch(4), kirsch(5), kirsch(6), kirsch(7)];

/// Responses of the eight masks at interior pixel `(x, y)`.
pub fn kirsch_responses(gray: &GrayImage, x: usize, y: usize) -> [i32; 8] {
    let mut patch = [0i32; 9];
    for dy in 0..3 {
        for dx in 0..3 {
            patch[dy * 3 + dx] = gray.get(x + dx - 1, y + dy - 1) as i32;
        }
    }
    let mut out = [0i32; 8];
    for (o, mask) in out.iter_mut().zip(&KIRSCH_MASKS) {
        *o = mask.iter().zip(&patch).map(|(m, p)| m * p).sum();
    }
    out
}

/// Sets the bits of the `k` largest absolute responses; ties go to the
/// lower mask index.
pub fn ldp_code(responses: &[i32; 8], k: usize) -> u8 {
    let mut order: [usize; 8] = [0, 1, 2, 3, 4, 5, 6, 7];
    order.sort_by(|&a, &b| responses[b].abs().cmp(&responses[a].abs()).then(a.cmp(&b)));
    order[..k].iter().fold(0u8, |code, &i| code | (1 << i))
}

/// All 8-bit codes with exactly `k` set bits, ascending.
pub fn ldp_codes(k: usize) -> Vec<u8> {
    (0u16..256).filter(|c| c.count_ones() as usize == k).map(|c| c as u8).collect()
}

/// Normalized histogram of LDP codes over interior ROI pixels.
pub fn ldp_features<T: Real>(gray: &GrayImage, roi: &BinaryMask, k: usize) -> Result<FeatureVector<T>> {
    if !(1..=7).contains(&k) {
        return Err(Error::InvalidK(k));
    }
    let (w, h) = (gray.width(), gray.height());
    if roi.width() != w || roi.height() != h {
        return Err(Error::InvalidImage("ROI and image sizes differ".into()));
    }
    let codes = ldp_codes(k);
    let mut bin_of = [usize::MAX; 256];
    for (i, &c) in codes.iter().enumerate() {
        bin_of[c as usize] = i;
    }
    let mut counts = vec![0u64; codes.len()];
    let mut total = 0u64;
    for (x, y) in roi.foreground() {
        if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
            continue;
        }
        let code = ldp_code(&kirsch_responses(gray, x, y), k);
        counts[bin_of[code as usize]] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::DegenerateRoi("no interior ROI pixel for LDP"));
    }
    let t = T::lit(total as f64);
    Ok(FeatureVector::new(BlockKind::Ldp, counts.iter().map(|&c| T::lit(c as f64) / t).collect()))
}
