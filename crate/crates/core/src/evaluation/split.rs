use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::NUM_CLASSES;

/// Disjoint train and validation ids, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<u64>,
    pub validation: Vec<u64>,
}

/// Per-class train counts: floors of `frac · n_c`, plus one for the classes
/// with the largest fractional parts until the total is `round(frac · N)`.
pub fn allocate(class_sizes: &[usize], frac: f64) -> Vec<usize> {
    let n: usize = class_sizes.iter().sum();
    let target = (frac * n as f64).round() as usize;
    let exact: Vec<f64> = class_sizes.iter().map(|&c| frac * c as f64).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    // Largest remainder first; equal remainders favor the lower class.
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut short = target.saturating_sub(alloc.iter().sum());
    for &c in order.iter().cycle().take(order.len() * 2) {
        if short == 0 {
            break;
        }
        if alloc[c] < class_sizes[c] {
            alloc[c] += 1;
            short -= 1;
        }
    }
    alloc
}

/// Stratified split of `(id, class)` records. Class `c` draws its train ids
/// from a shuffle on ChaCha8 stream `c` of `seed`.
pub fn stratified_split(records: &[(u64, usize)], train_frac: f64, seed: u64) -> Result<Split> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidFraction(train_frac));
    }
    let mut by_class: Vec<Vec<u64>> = vec![Vec::new(); NUM_CLASSES];
    for &(id, c) in records {
        by_class.get_mut(c).ok_or(Error::LabelOutOfRange(c))?.push(id);
    }
    for (class, ids) in by_class.iter().enumerate() {
        if ids.len() == 1 {
            return Err(Error::ClassTooSmall { class, count: 1 });
        }
    }
    if records.is_empty() {
        return Err(Error::ClassTooSmall { class: 0, count: 0 });
    }
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let alloc = allocate(&sizes, train_frac);
    let mut split = Split { train: Vec::new(), validation: Vec::new() };
    for (c, mut ids) in by_class.into_iter().enumerate() {
        ids.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        ids.shuffle(&mut rng);
        split.train.extend_from_slice(&ids[..alloc[c]]);
        split.validation.extend_from_slice(&ids[alloc[c]..]);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn records(sizes: &[usize]) -> Vec<(u64, usize)> {
        let mut out = Vec::new();
        for (c, &n) in sizes.iter().enumerate() {
            for _ in 0..n {
                out.push((out.len() as u64, c));
            }
        }
        out
    }

    #[test]
    fn full_scale_counts() {
        let recs = records(&[1785, 366, 990, 190, 291]);
        let s = stratified_split(&recs, 0.8, 42).unwrap();
        assert_eq!((s.train.len(), s.validation.len()), (2898, 724));
    }

    #[test]
    fn errors() {
        assert!(matches!(stratified_split(&records(&[3, 1]), 0.8, 1), Err(Error::ClassTooSmall { class: 1, count: 1 })));
        assert!(matches!(stratified_split(&records(&[3, 3]), 1.0, 1), Err(Error::InvalidFraction(_))));
        assert!(matches!(stratified_split(&records(&[3, 3]), 0.0, 1), Err(Error::InvalidFraction(_))));
        assert!(stratified_split(&[], 0.5, 1).is_err());
    }

    proptest! {
        #[test]
        fn split_contract(sizes in prop::collection::vec(2usize..60, 5), frac in 0.05f64..0.95, seed in any::<u64>()) {
            let recs = records(&sizes);
            let s = stratified_split(&recs, frac, seed).unwrap();
            let n = recs.len();
            prop_assert_eq!(s.train.len(), (frac * n as f64).round() as usize);
            let mut all: Vec<u64> = s.train.iter().chain(&s.validation).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n as u64).collect::<Vec<_>>());
            for (c, &nc) in sizes.iter().enumerate() {
                let t = s.train.iter().filter(|&&id| recs[id as usize].1 == c).count() as f64;
                prop_assert!((t - frac * nc as f64).abs() <= 1.0);
            }
            prop_assert_eq!(&stratified_split(&recs, frac, seed).unwrap(), &s);
        }
    }
}
