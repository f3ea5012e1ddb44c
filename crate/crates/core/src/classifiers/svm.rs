use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fusion::NUM_CLASSES;
use crate::scalar::{argmax_low, Real};

use super::TrainConfig;

/// One-vs-rest linear scorers. Each weight vector carries its bias as the
/// last coordinate, paired with a constant input of 1.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel<T> {
    pub weights: Vec<Vec<T>>,
}

impl<T: Real> SvmModel<T> {
    /// Pegasos subgradient descent on the regularized hinge loss, one pass
    /// over a freshly shuffled order per epoch, step `1/(λt)`.
    pub fn fit(rows: &[&[T]], labels: &[usize], cfg: &TrainConfig) -> Result<Self> {
        let first = labels[0];
        if labels.iter().all(|&l| l == first) {
            return Err(Error::SingleClassTrainingSet);
        }
        let dim = rows[0].len();
        let lambda = T::lit(cfg.svm_lambda);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..rows.len()).collect();
        let mut weights = vec![vec![T::zero(); dim + 1]; NUM_CLASSES];
        let mut t = 0u64;
        for _ in 0..cfg.svm_epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = T::one() / (lambda * T::lit(t as f64));
                let shrink = T::one() - eta * lambda;
                let x = rows[i];
                for (c, w) in weights.iter_mut().enumerate() {
                    let y = if labels[i] == c { T::one() } else { -T::one() };
                    let margin = y * score(w, x);
                    w.iter_mut().for_each(|wj| *wj = *wj * shrink);
                    if margin < T::one() {
                        let step = eta * y;
                        for (wj, &xj) in w.iter_mut().zip(x) {
                            *wj = *wj + step * xj;
                        }
                        w[dim] = w[dim] + step;
                    }
                }
            }
        }
        Ok(Self { weights })
    }

    pub fn scores(&self, v: &[T]) -> Vec<T> {
        self.weights.iter().map(|w| score(w, v)).collect()
    }

    pub fn predict(&self, v: &[T]) -> usize {
        let s: Vec<f64> = self.scores(v).into_iter().map(|x| if x.is_nan() { f64::NEG_INFINITY } else { x.widen() }).collect();
        argmax_low(&s)
    }
}

fn score<T: Real>(w: &[T], x: &[T]) -> T {
    let dim = x.len();
    w[..dim].iter().zip(x).fold(w[dim], |s, (&a, &b)| s + a * b)
}
