use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::NUM_CLASSES;
use crate::scalar::Field;

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self { counts: vec![vec![0; k]; k] }
    }

    /// Accepts any square table.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::EmptyMatrix);
        }
        Ok(Self { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

/// Tallies `(truth, prediction)` pairs over the five grades.
pub fn confusion(truth: &[usize], pred: &[usize]) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch(truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let mut cm = ConfusionMatrix::zeros(NUM_CLASSES);
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= NUM_CLASSES || p >= NUM_CLASSES {
            return Err(Error::LabelOutOfRange(t.max(p)));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<F = f64> {
    pub accuracy: F,
    pub recall_micro: F,
    pub recall_macro: F,
    pub precision_micro: F,
    pub precision_macro: F,
    pub f1_micro: F,
    pub f1_macro: F,
    pub kappa: F,
    pub per_class_recall: Vec<F>,
    pub per_class_precision: Vec<F>,
    pub per_class_f1: Vec<F>,
    pub confusion: ConfusionMatrix,
}

/// `a / b`, with `0 / 0` read as 0.
fn ratio<F: Field>(a: F, b: F) -> F {
    if b == F::zero() {
        F::zero()
    } else {
        a / b
    }
}

fn harmonic<F: Field>(p: F, r: F) -> F {
    let two = F::one() + F::one();
    ratio(two * p * r, p + r)
}

/// Scores a confusion matrix in any ordered field.
pub fn metrics<F: Field>(cm: &ConfusionMatrix) -> Result<MetricsReport<F>> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let k = cm.classes();
    let n = F::from_count(total);
    let kf = F::from_count(k as u64);
    let mut per_class_recall = Vec::with_capacity(k);
    let mut per_class_precision = Vec::with_capacity(k);
    let mut per_class_f1 = Vec::with_capacity(k);
    let (mut tp_sum, mut row_total, mut col_total) = (0u64, 0u64, 0u64);
    let mut chance = F::zero();
    for c in 0..k {
        let tp = cm.counts[c][c];
        let (row, col) = (cm.row_sum(c), cm.col_sum(c));
        let r = ratio(F::from_count(tp), F::from_count(row));
        let p = ratio(F::from_count(tp), F::from_count(col));
        per_class_recall.push(r);
        per_class_precision.push(p);
        per_class_f1.push(harmonic(p, r));
        tp_sum += tp;
        row_total += row;
        col_total += col;
        chance = chance + F::from_count(row) * F::from_count(col);
    }
    let mean = |v: &[F]| v.iter().fold(F::zero(), |s, &x| s + x) / kf;
    let accuracy = F::from_count(cm.trace()) / n;
    let recall_micro = ratio(F::from_count(tp_sum), F::from_count(row_total));
    let precision_micro = ratio(F::from_count(tp_sum), F::from_count(col_total));
    let p_e = chance / (n * n);
    let kappa = if p_e == F::one() { F::zero() } else { (accuracy - p_e) / (F::one() - p_e) };
    Ok(MetricsReport {
        accuracy,
        recall_micro,
        recall_macro: mean(&per_class_recall),
        precision_micro,
        precision_macro: mean(&per_class_precision),
        f1_micro: harmonic(precision_micro, recall_micro),
        f1_macro: mean(&per_class_f1),
        kappa,
        per_class_recall,
        per_class_precision,
        per_class_f1,
        confusion: cm.clone(),
    })
}
