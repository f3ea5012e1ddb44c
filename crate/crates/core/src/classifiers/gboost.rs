use rayon::prelude::*;

use crate::error::Result;
use crate::fusion::NUM_CLASSES;
use crate::scalar::{argmax_low, Real};

use super::tree::{grow_regression_tree, Presorted, Tree};
use super::TrainConfig;

const TREE_DEPTH: usize = 2;
const PRIOR_FLOOR: f64 = 1e-12;

/// One-vs-rest logistic boosting. Class `c` scores
/// `init[c] + lr · Σ_stage trees[c][stage](v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradBoostModel<T> {
    pub init: Vec<T>,
    pub learning_rate: T,
    pub trees: Vec<Vec<Tree<T>>>,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> GradBoostModel<T> {
    pub fn fit(rows: &[&[T]], labels: &[usize], cfg: &TrainConfig) -> Result<Self> {
        let n = rows.len();
        let sorted = Presorted::new(rows);
        let lr = T::lit(cfg.gb_learning_rate);
        let init: Vec<T> = (0..NUM_CLASSES)
            .map(|c| {
                let p = labels.iter().filter(|&&l| l == c).count() as f64 / n as f64;
                let p = p.clamp(PRIOR_FLOOR, 1.0 - PRIOR_FLOOR);
                T::lit((p / (1.0 - p)).ln())
            })
            .collect();
        let trees = (0..NUM_CLASSES)
            .into_par_iter()
            .map(|c| {
                let y: Vec<T> = labels.iter().map(|&l| if l == c { T::one() } else { T::zero() }).collect();
                let mut f = vec![init[c]; n];
                let mut stages = Vec::with_capacity(cfg.gb_stages);
                for _ in 0..cfg.gb_stages {
                    let residual: Vec<T> = f.iter().zip(&y).map(|(&fi, &yi)| yi - sigmoid(fi)).collect();
                    let tree = grow_regression_tree(rows, &residual, &sorted, TREE_DEPTH);
                    for (fi, r) in f.iter_mut().zip(rows) {
                        *fi = *fi + lr * tree.value(r);
                    }
                    stages.push(tree);
                }
                stages
            })
            .collect();
        Ok(Self { init, learning_rate: lr, trees })
    }

    /// Raw score of `class` after the first `stages` trees.
    pub fn staged_score(&self, v: &[T], class: usize, stages: usize) -> T {
        self.trees[class].iter().take(stages).fold(self.init[class], |s, t| s + self.learning_rate * t.value(v))
    }

    pub fn predict(&self, v: &[T]) -> usize {
        let stages = self.trees.first().map_or(0, |t| t.len());
        let s: Vec<f64> = (0..NUM_CLASSES)
            .map(|c| {
                let x = self.staged_score(v, c, stages).widen();
                if x.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    x
                }
            })
            .collect();
        argmax_low(&s)
    }

    /// Mean binary log-loss of the `class`-vs-rest scorer after 0, 1, ... stages.
    pub fn log_loss_curve(&self, rows: &[&[T]], labels: &[usize], class: usize) -> Vec<f64> {
        let n = rows.len() as f64;
        let mut f: Vec<f64> = vec![self.init[class].widen(); rows.len()];
        let lr = self.learning_rate.widen();
        let loss = |f: &[f64]| {
            f.iter()
                .zip(labels)
                .map(|(&fi, &l)| {
                    let m = if l == class { fi } else { -fi };
                    // ln(1 + e^{-m}) without overflow.
                    if m > 0.0 {
                        (-m).exp().ln_1p()
                    } else {
                        -m + m.exp().ln_1p()
                    }
                })
                .sum::<f64>()
                / n
        };
        let mut curve = vec![loss(&f)];
        for t in &self.trees[class] {
            for (fi, r) in f.iter_mut().zip(rows) {
                *fi += lr * t.value(r).widen();
            }
            curve.push(loss(&f));
        }
        curve
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gaussian_blobs;

    fn unpack(s: &[crate::fusion::FusedSample<f64>]) -> (Vec<&[f64]>, Vec<usize>) {
        (s.iter().map(|x| x.features.as_slice()).collect(), s.iter().map(|x| x.label).collect())
    }

    #[test]
    fn loss_non_increasing_per_stage() {
        let blobs = gaussian_blobs::<f64>(30, 5, 3.0, 21);
        let (rows, labels) = unpack(&blobs);
        let m = GradBoostModel::fit(&rows, &labels, &TrainConfig { gb_stages: 60, ..Default::default() }).unwrap();
        for c in 0..NUM_CLASSES {
            let curve = m.log_loss_curve(&rows, &labels, c);
            assert_eq!(curve.len(), 61);
            for p in curve.windows(2) {
                assert!(p[1] <= p[0] * (1.0 + 1e-12), "class {c}: {} -> {}", p[0], p[1]);
            }
            assert!(curve[60] < curve[0]);
        }
    }

    #[test]
    fn vanishing_rate_gives_prior() {
        let mut blobs = gaussian_blobs::<f64>(10, 3, 4.0, 2);
        // Make class 3 the most frequent.
        blobs.extend(gaussian_blobs::<f64>(4, 3, 4.0, 3).into_iter().filter(|b| b.label == 3));
        let (rows, labels) = unpack(&blobs);
        let m = GradBoostModel::fit(&rows, &labels, &TrainConfig { gb_learning_rate: 1e-12, gb_stages: 10, ..Default::default() })
            .unwrap();
        assert!(rows.iter().all(|r| m.predict(r) == 3));
    }

    #[test]
    fn deterministic() {
        let blobs = gaussian_blobs::<f64>(20, 4, 3.0, 5);
        let (rows, labels) = unpack(&blobs);
        let cfg = TrainConfig { gb_stages: 20, ..Default::default() };
        let a = GradBoostModel::fit(&rows, &labels, &cfg).unwrap();
        let b = GradBoostModel::fit(&rows, &labels, &cfg).unwrap();
        assert_eq!(a, b);
        let held = gaussian_blobs::<f64>(20, 4, 3.0, 6);
        assert!(held.iter().all(|s| a.predict(&s.features) == b.predict(&s.features)));
    }
}
