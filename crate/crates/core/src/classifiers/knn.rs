use crate::error::{Error, Result};
use crate::fusion::NUM_CLASSES;
use crate::scalar::Real;

/// Memorized training rows; prediction is a k-nearest-neighbor vote.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnModel<T> {
    pub k: usize,
    pub rows: Vec<Vec<T>>,
    pub labels: Vec<usize>,
}

impl<T: Real> KnnModel<T> {
    pub fn fit(rows: &[&[T]], labels: &[usize], k: usize) -> Result<Self> {
        if k == 0 || k > rows.len() {
            return Err(Error::InvalidNeighbors { k, n: rows.len() });
        }
        Ok(Self { k, rows: rows.iter().map(|r| r.to_vec()).collect(), labels: labels.to_vec() })
    }

    /// Indices of the k nearest rows, nearest first; equal distances keep
    /// the lower index first.
    pub fn neighbors(&self, v: &[T]) -> Vec<usize> {
        let mut d: Vec<(T, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(v).map(|(&a, &b)| (a - b) * (a - b)).fold(T::zero(), |s, x| s + x), i))
            .collect();
        let key = |a: &(T, usize), b: &(T, usize)| a.0.widen().total_cmp(&b.0.widen()).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, key);
            d.truncate(self.k);
        }
        d.sort_by(key);
        d.into_iter().map(|(_, i)| i).collect()
    }

    /// Majority vote; a tie goes to whichever tied class owns the nearest
    /// neighbor.
    pub fn predict(&self, v: &[T]) -> usize {
        let nn = self.neighbors(v);
        let mut votes = [0usize; NUM_CLASSES];
        for &i in &nn {
            votes[self.labels[i]] += 1;
        }
        let top = *votes.iter().max().unwrap_or(&0);
        nn.iter().map(|&i| self.labels[i]).find(|&c| votes[c] == top).unwrap_or(0)
    }
}
