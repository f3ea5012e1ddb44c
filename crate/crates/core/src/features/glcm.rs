use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::scalar::Real;
use crate::segmentation::BinaryMask;

use super::{BlockKind, FeatureVector};

/// Names of the thirteen statistics, in output order.
pub const HARALICK_NAMES: [&str; 13] = [
    "angular_second_moment",
    "contrast",
    "correlation",
    "sum_of_squares_variance",
    "inverse_difference_moment",
    "sum_average",
    "sum_variance",
    "sum_entropy",
    "entropy",
    "difference_variance",
    "difference_entropy",
    "info_measure_correlation_1",
    "info_measure_correlation_2",
];

/// Co-occurrence direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Angle {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl Angle {
    pub const ALL: [Angle; 4] = [Angle::Deg0, Angle::Deg45, Angle::Deg90, Angle::Deg135];

    /// Column/row step of the neighbor at `distance` (rows grow downwards).
    pub fn offset(self, distance: usize) -> (isize, isize) {
        let d = distance as isize;
        match self {
            Angle::Deg0 => (d, 0),
            Angle::Deg45 => (d, -d),
            Angle::Deg90 => (0, -d),
            Angle::Deg135 => (-d, -d),
        }
    }

    pub fn degrees(self) -> u32 {
        match self {
            Angle::Deg0 => 0,
            Angle::Deg45 => 45,
            Angle::Deg90 => 90,
            Angle::Deg135 => 135,
        }
    }
}

impl TryFrom<u32> for Angle {
    type Error = String;

    fn try_from(deg: u32) -> Result<Self, String> {
        match deg {
            0 => Ok(Angle::Deg0),
            45 => Ok(Angle::Deg45),
            90 => Ok(Angle::Deg90),
            135 => Ok(Angle::Deg135),
            other => Err(format!("GLCM angle must be 0, 45, 90 or 135, got {other}")),
        }
    }
}

impl From<Angle> for u32 {
    fn from(a: Angle) -> u32 {
        a.degrees()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlcmConfig {
    /// Number of equal-width quantization bins over `0..=255`.
    pub levels: usize,
    pub distances: Vec<usize>,
    pub angles: Vec<Angle>,
    /// Add the transpose so each pair is counted in both directions.
    pub symmetric: bool,
    /// Scale the returned matrices to sum 1. Statistics always use the
    /// normalized matrix.
    pub normalized: bool,
}

impl Default for GlcmConfig {
    fn default() -> Self {
        Self {
            levels: 32,
            distances: vec![1, 2],
            angles: Angle::ALL.to_vec(),
            symmetric: true,
            normalized: true,
        }
    }
}

impl GlcmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=256).contains(&self.levels) {
            return Err(Error::InvalidDescriptorConfig(format!("GLCM levels {} not in 2..=256", self.levels)));
        }
        if self.distances.is_empty() || self.distances.contains(&0) {
            return Err(Error::InvalidDescriptorConfig("GLCM distances must be nonempty and >= 1".into()));
        }
        if self.angles.is_empty() {
            return Err(Error::InvalidDescriptorConfig("GLCM needs at least one angle".into()));
        }
        Ok(())
    }
}

/// One co-occurrence matrix, row-major `levels × levels`.
#[derive(Clone, Debug, PartialEq)]
pub struct Glcm<T = f64> {
    pub distance: usize,
    pub angle: Angle,
    pub levels: usize,
    /// Number of ordered ROI pixel pairs counted (before symmetrization).
    pub pairs: usize,
    pub cells: Vec<T>,
}

impl<T: Real> Glcm<T> {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.cells[i * self.levels + j]
    }
}

/// Builds one matrix per `(distance, angle)`, counting only pairs with both
/// pixels inside `roi`. Matrices without any pair are returned all-zero.
pub fn glcm_matrices<T: Real>(gray: &GrayImage, roi: &BinaryMask, cfg: &GlcmConfig) -> Result<Vec<Glcm<T>>> {
    cfg.validate()?;
    let (w, h) = (gray.width(), gray.height());
    if roi.width() != w || roi.height() != h {
        return Err(Error::InvalidImage("ROI and image sizes differ".into()));
    }
    let levels = cfg.levels;
    let quant: Vec<usize> = gray.data().iter().map(|&v| v as usize * levels / 256).collect();

    let mut out = Vec::with_capacity(cfg.distances.len() * cfg.angles.len());
    for &distance in &cfg.distances {
        for &angle in &cfg.angles {
            let (dx, dy) = angle.offset(distance);
            let mut counts = vec![0u64; levels * levels];
            let mut pairs = 0usize;
            for (x, y) in roi.foreground() {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if !roi.get(nx, ny) {
                    continue;
                }
                let (a, b) = (quant[y * w + x], quant[ny * w + nx]);
                counts[a * levels + b] += 1;
                if cfg.symmetric {
                    counts[b * levels + a] += 1;
                }
                pairs += 1;
            }
            let total: u64 = counts.iter().sum();
            let cells = counts
                .iter()
                .map(|&c| {
                    if cfg.normalized && total > 0 {
                        T::lit(c as f64) / T::lit(total as f64)
                    } else {
                        T::lit(c as f64)
                    }
                })
                .collect();
            out.push(Glcm { distance, angle, levels, pairs, cells });
        }
    }
    Ok(out)
}

fn plogp<T: Real>(p: T) -> T {
    if p > T::zero() {
        -p * p.ln()
    } else {
        T::zero()
    }
}

/// Thirteen Haralick statistics of a normalized matrix (natural log).
///
/// Returns the statistics and whether a zero-variance or zero-entropy case
/// forced a value to 0.
pub fn haralick_from_glcm<T: Real>(p: &[T], levels: usize) -> ([T; 13], bool) {
    let l = levels;
    let at = |i: usize, j: usize| p[i * l + j];
    let idx = T::count;

    let mut px = vec![T::zero(); l];
    let mut py = vec![T::zero(); l];
    let mut p_sum = vec![T::zero(); 2 * l - 1];
    let mut p_diff = vec![T::zero(); l];
    for i in 0..l {
        for j in 0..l {
            let v = at(i, j);
            px[i] = px[i] + v;
            py[j] = py[j] + v;
            p_sum[i + j] = p_sum[i + j] + v;
            p_diff[i.abs_diff(j)] = p_diff[i.abs_diff(j)] + v;
        }
    }
    let mean_x: T = (0..l).map(|i| idx(i) * px[i]).sum();
    let mean_y: T = (0..l).map(|j| idx(j) * py[j]).sum();
    let var_x: T = (0..l).map(|i| (idx(i) - mean_x).powi(2) * px[i]).sum();
    let var_y: T = (0..l).map(|j| (idx(j) - mean_y).powi(2) * py[j]).sum();

    let mut degenerate = false;
    let mut asm = T::zero();
    let mut idm = T::zero();
    let mut entropy = T::zero();
    let mut cov = T::zero();
    let mut hxy1 = T::zero();
    let mut hxy2 = T::zero();
    for i in 0..l {
        for j in 0..l {
            let v = at(i, j);
            asm = asm + v * v;
            idm = idm + v / (T::one() + (idx(i) - idx(j)).powi(2));
            entropy = entropy + plogp(v);
            cov = cov + (idx(i) - mean_x) * (idx(j) - mean_y) * v;
            let pp = px[i] * py[j];
            if pp > T::zero() {
                hxy1 = hxy1 - v * pp.ln();
                hxy2 = hxy2 + plogp(pp);
            }
        }
    }
    let correlation = if var_x > T::zero() && var_y > T::zero() {
        cov / (var_x.sqrt() * var_y.sqrt())
    } else {
        degenerate = true;
        T::zero()
    };

    let contrast: T = (0..l).map(|k| idx(k * k) * p_diff[k]).sum();
    let sum_average: T = p_sum.iter().enumerate().map(|(k, &v)| idx(k) * v).sum();
    let sum_variance: T = p_sum.iter().enumerate().map(|(k, &v)| (idx(k) - sum_average).powi(2) * v).sum();
    let sum_entropy: T = p_sum.iter().map(|&v| plogp(v)).sum();
    let diff_mean: T = p_diff.iter().enumerate().map(|(k, &v)| idx(k) * v).sum();
    let diff_variance: T = p_diff.iter().enumerate().map(|(k, &v)| (idx(k) - diff_mean).powi(2) * v).sum();
    let diff_entropy: T = p_diff.iter().map(|&v| plogp(v)).sum();

    let hx: T = px.iter().map(|&v| plogp(v)).sum();
    let hy: T = py.iter().map(|&v| plogp(v)).sum();
    let h_max = hx.max(hy);
    let imc1 = if h_max > T::zero() {
        (entropy - hxy1) / h_max
    } else {
        degenerate = true;
        T::zero()
    };
    let imc2 = (T::one() - (T::lit(-2.0) * (hxy2 - entropy)).exp()).max(T::zero()).sqrt();

    (
        [
            asm,
            contrast,
            correlation,
            var_x,
            idm,
            sum_average,
            sum_variance,
            sum_entropy,
            entropy,
            diff_variance,
            diff_entropy,
            imc1,
            imc2,
        ],
        degenerate,
    )
}

/// Haralick statistics averaged over every `(distance, angle)` matrix that
/// holds at least one ROI pair.
pub fn haralick_features<T: Real>(gray: &GrayImage, roi: &BinaryMask, cfg: &GlcmConfig) -> Result<FeatureVector<T>> {
    let matrices = glcm_matrices::<T>(gray, roi, cfg)?;
    let mut sum = [T::zero(); 13];
    let mut used = 0usize;
    let mut degenerate = false;
    for m in matrices.iter().filter(|m| m.pairs > 0) {
        let total: T = m.cells.iter().copied().sum();
        let normalized: Vec<T> = m.cells.iter().map(|&c| c / total).collect();
        let (stats, flag) = haralick_from_glcm(&normalized, m.levels);
        for (s, v) in sum.iter_mut().zip(stats) {
            *s = *s + v;
        }
        degenerate |= flag;
        used += 1;
    }
    if used == 0 {
        return Err(Error::DegenerateRoi("no co-occurring ROI pixel pair"));
    }
    let n = T::count(used);
    let mut fv = FeatureVector::new(BlockKind::Haralick, sum.iter().map(|&s| s / n).collect());
    fv.degenerate = degenerate;
    Ok(fv)
}
