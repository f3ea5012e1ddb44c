use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fusion::NUM_CLASSES;
use crate::scalar::{argmax_low, Real};

use super::tree::{midpoint, Node, Presorted, Tree};
use super::TrainConfig;

const ERR_FLOOR: f64 = 1e-10;

/// SAMME stage weight `ln((1 − err)/err) + ln(K − 1)` with `err` clamped
/// into `[1e-10, 1 − 1e-10]`.
pub fn samme_alpha(err: f64, k: usize) -> f64 {
    let e = err.clamp(ERR_FLOOR, 1.0 - ERR_FLOOR);
    ((1.0 - e) / e).ln() + ((k - 1) as f64).ln()
}

/// Weighted stumps voting with their stage weights.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaBoostModel<T> {
    pub stumps: Vec<Tree<T>>,
    pub alphas: Vec<T>,
    /// Weighted training error of each kept stage.
    pub stage_errors: Vec<T>,
    /// Majority training class, used when no stage was kept.
    pub prior: usize,
}

impl<T: Real> AdaBoostModel<T> {
    pub fn fit(rows: &[&[T]], labels: &[usize], cfg: &TrainConfig) -> Result<Self> {
        let n = rows.len();
        let k = NUM_CLASSES;
        let sorted = Presorted::new(rows);
        let mut counts = [0usize; NUM_CLASSES];
        labels.iter().for_each(|&l| counts[l] += 1);
        let prior = argmax_low(&counts);
        let mut w = vec![T::one() / T::count(n); n];
        let mut model = Self { stumps: Vec::new(), alphas: Vec::new(), stage_errors: Vec::new(), prior };
        let chance = 1.0 - 1.0 / k as f64;
        let mut features: Vec<usize> = (0..sorted.order.len()).collect();
        for stage in 0..cfg.ada_stages {
            // A fresh seeded feature order per stage spreads exact ties.
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stage as u64);
            features.shuffle(&mut rng);
            let stump = fit_stump(rows, labels, &w, &sorted, &features);
            let miss: Vec<bool> = rows.iter().zip(labels).map(|(r, &l)| stump.class(r) != l).collect();
            let total = w.iter().fold(T::zero(), |s, &x| s + x);
            let wrong = w.iter().zip(&miss).filter(|p| *p.1).fold(T::zero(), |s, (&x, _)| s + x);
            let err = (wrong / total).widen();
            if err >= chance {
                break;
            }
            let alpha = T::lit(samme_alpha(err, k));
            model.stumps.push(stump);
            model.alphas.push(alpha);
            model.stage_errors.push(T::lit(err));
            if err == 0.0 {
                break;
            }
            let boost = alpha.exp();
            for (wi, &m) in w.iter_mut().zip(&miss) {
                if m {
                    *wi = *wi * boost;
                }
            }
            let total = w.iter().fold(T::zero(), |s, &x| s + x);
            w.iter_mut().for_each(|wi| *wi = *wi / total);
        }
        Ok(model)
    }

    /// Prediction using only the first `stages` stumps.
    pub fn staged_predict(&self, v: &[T], stages: usize) -> usize {
        if self.stumps.is_empty() || stages == 0 {
            return self.prior;
        }
        let mut score = [0f64; NUM_CLASSES];
        for (s, a) in self.stumps.iter().zip(&self.alphas).take(stages) {
            score[s.class(v)] += a.widen();
        }
        argmax_low(&score)
    }

    pub fn predict(&self, v: &[T]) -> usize {
        self.staged_predict(v, self.stumps.len())
    }

    /// Mean SAMME exponential loss after 0, 1, ... kept stages. With coded
    /// targets it reduces to `exp(Σ_t α_t (miss_t − (K−1)/K))` per sample,
    /// which each stage can only lower.
    pub fn exp_loss_curve(&self, rows: &[&[T]], labels: &[usize]) -> Vec<f64> {
        let shift = (NUM_CLASSES - 1) as f64 / NUM_CLASSES as f64;
        let mut exponent = vec![0f64; rows.len()];
        let mut curve = vec![1.0];
        for (s, a) in self.stumps.iter().zip(&self.alphas) {
            let a = a.widen();
            for ((e, r), &l) in exponent.iter_mut().zip(rows).zip(labels) {
                let miss = if s.class(r) != l { 1.0 } else { 0.0 };
                *e += a * (miss - shift);
            }
            curve.push(exponent.iter().map(|e| e.exp()).sum::<f64>() / rows.len() as f64);
        }
        curve
    }
}

/// Depth-1 tree with the lowest weighted Gini impurity; each side predicts
/// its heaviest class. Features are scanned in the order given and ties keep
/// the first split found.
fn fit_stump<T: Real>(rows: &[&[T]], labels: &[usize], w: &[T], sorted: &Presorted, features: &[usize]) -> Tree<T> {
    let mut total = [0f64; NUM_CLASSES];
    for (&l, &wi) in labels.iter().zip(w) {
        total[l] += wi.widen();
    }
    let heaviest = |c: &[f64; NUM_CLASSES]| argmax_low(c);
    // Minimizing W_L·gini_L + W_R·gini_R is maximizing Σ l_c²/W_L + Σ r_c²/W_R.
    let purity = |c: &[f64; NUM_CLASSES]| {
        let s: f64 = c.iter().sum();
        if s > 0.0 { c.iter().map(|x| x * x).sum::<f64>() / s } else { 0.0 }
    };
    let mut best_score = purity(&total) + 1e-12;
    let mut best: Option<(usize, T, usize, usize)> = None;
    for &f in features {
        let order = &sorted.order[f];
        let mut left = [0f64; NUM_CLASSES];
        for j in 0..order.len() - 1 {
            let (i, next) = (order[j], order[j + 1]);
            left[labels[i]] += w[i].widen();
            if !(rows[i][f] < rows[next][f]) {
                continue;
            }
            let mut right = [0f64; NUM_CLASSES];
            for c in 0..NUM_CLASSES {
                right[c] = total[c] - left[c];
            }
            let score = purity(&left) + purity(&right);
            if score > best_score {
                best_score = score;
                best = Some((f, midpoint(rows[i][f], rows[next][f]), heaviest(&left), heaviest(&right)));
            }
        }
    }
    match best {
        None => Tree { nodes: vec![Node::Leaf { class: heaviest(&total), value: T::zero() }] },
        Some((feature, threshold, cl, cr)) => Tree {
            nodes: vec![
                Node::Split { feature, threshold, left: 1, right: 2 },
                Node::Leaf { class: cl, value: T::zero() },
                Node::Leaf { class: cr, value: T::zero() },
            ],
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gaussian_blobs;

    #[test]
    fn alpha_formula() {
        assert!((samme_alpha(0.5, 5) - 4f64.ln()).abs() < 1e-15);
        assert!((samme_alpha(0.5, 5) - 1.386).abs() < 1e-3);
        assert!(samme_alpha(0.0, 5).is_finite());
        assert!(samme_alpha(1.0, 5).is_finite());
        assert!(samme_alpha(0.8, 5).abs() < 1e-15);
    }

    #[test]
    fn stump_splits_two_clusters() {
        let rows: Vec<Vec<f64>> = vec![vec![0.0, 5.0], vec![1.0, 5.0], vec![10.0, 5.0], vec![11.0, 5.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let labels = [1, 1, 3, 3];
        let s = fit_stump(&refs, &labels, &[0.25; 4], &Presorted::new(&refs), &[1, 0]);
        assert_eq!(s.nodes[0], Node::Split { feature: 0, threshold: 5.5, left: 1, right: 2 });
        assert_eq!((s.class(&[0.0, 0.0]), s.class(&[20.0, 0.0])), (1, 3));
    }

    #[test]
    fn exp_loss_non_increasing() {
        let blobs = gaussian_blobs::<f64>(40, 6, 5.0, 11);
        let rows: Vec<&[f64]> = blobs.iter().map(|b| b.features.as_slice()).collect();
        let labels: Vec<usize> = blobs.iter().map(|b| b.label).collect();
        let m = AdaBoostModel::fit(&rows, &labels, &TrainConfig::default()).unwrap();
        assert!(!m.stumps.is_empty());
        let curve = m.exp_loss_curve(&rows, &labels);
        assert!(curve.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12)), "{curve:?}");
        assert!(m.alphas.iter().all(|a| a.is_finite() && *a > 0.0));
        let errs: Vec<usize> = (0..=m.stumps.len())
            .map(|s| rows.iter().zip(&labels).filter(|(r, &l)| m.staged_predict(r, s) != l).count())
            .collect();
        assert!(errs.last() < errs.first());
    }
}
