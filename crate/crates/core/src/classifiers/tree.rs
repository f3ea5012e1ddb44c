//! CART trees (Gini for classification, squared error for regression) and
//! the bagged forest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::fusion::NUM_CLASSES;
use crate::scalar::{argmax_low, Real};

use super::TrainConfig;

/// Inputs with `v[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq)]
pub enum Node<T> {
    Leaf { class: usize, value: T },
    Split { feature: usize, threshold: T, left: usize, right: usize },
}

/// Nodes in preorder; the root is node 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree<T> {
    pub nodes: Vec<Node<T>>,
}

impl<T: Real> Tree<T> {
    fn leaf(&self, v: &[T]) -> &Node<T> {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if v[*feature] <= *threshold { *left } else { *right };
                }
                leaf => return leaf,
            }
        }
    }

    pub fn class(&self, v: &[T]) -> usize {
        match self.leaf(v) {
            Node::Leaf { class, .. } => *class,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn value(&self, v: &[T]) -> T {
        match self.leaf(v) {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// A threshold strictly between `a < b` that sends `a` left and `b` right.
pub(crate) fn midpoint<T: Real>(a: T, b: T) -> T {
    let m = a + (b - a) / T::lit(2.0);
    if m >= b || m < a {
        a
    } else {
        m
    }
}

/// Lowest-index majority class of `idx`.
fn majority(labels: &[usize], idx: &[usize]) -> usize {
    let mut counts = [0usize; NUM_CLASSES];
    idx.iter().for_each(|&i| counts[labels[i]] += 1);
    argmax_low(&counts)
}

struct ClassBuilder<'a, T> {
    rows: &'a [&'a [T]],
    labels: &'a [usize],
    max_depth: usize,
    m_try: usize,
    features: Vec<usize>,
    nodes: Vec<Node<T>>,
}

impl<T: Real> ClassBuilder<'_, T> {
    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        let class = majority(self.labels, idx);
        self.nodes.push(Node::Leaf { class, value: T::zero() });
        let pure = idx.iter().all(|&i| self.labels[i] == class);
        if pure || depth >= self.max_depth || idx.len() < 2 {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(idx, rng) else {
            return id;
        };
        let mut cut = 0;
        for j in 0..idx.len() {
            if self.rows[idx[j]][feature] <= threshold {
                idx.swap(j, cut);
                cut += 1;
            }
        }
        let (l, r) = idx.split_at_mut(cut);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }

    /// Visits features in a random order until `m_try` non-constant ones
    /// have been scored; constant features do not count.
    fn best_split(&mut self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, T)> {
        let n = idx.len() as f64;
        let mut total = [0f64; NUM_CLASSES];
        idx.iter().for_each(|&i| total[self.labels[i]] += 1.0);
        let parent = total.iter().map(|c| c * c).sum::<f64>() / n;
        let mut best: Option<(f64, usize, T)> = None;
        let mut scored = 0;
        let d = self.features.len();
        let mut pairs: Vec<(T, usize)> = Vec::with_capacity(idx.len());
        for j in 0..d {
            if scored >= self.m_try {
                break;
            }
            let pick = rng.random_range(j..d);
            self.features.swap(j, pick);
            let f = self.features[j];
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.rows[i][f], self.labels[i])));
            pairs.sort_by(|a, b| a.0.widen().total_cmp(&b.0.widen()));
            if pairs[0].0 == pairs[pairs.len() - 1].0 {
                continue;
            }
            scored += 1;
            let mut left = [0f64; NUM_CLASSES];
            for k in 0..pairs.len() - 1 {
                left[pairs[k].1] += 1.0;
                if pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = n - nl;
                let sl: f64 = left.iter().map(|c| c * c).sum();
                let sr: f64 = left.iter().zip(&total).map(|(l, t)| (t - l) * (t - l)).sum();
                let score = sl / nl + sr / nr;
                if score > parent + 1e-12 && best.as_ref().is_none_or(|b| score > b.0) {
                    best = Some((score, f, midpoint(pairs[k].0, pairs[k + 1].0)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Grows a Gini tree on `idx` (duplicates allowed, as in a bootstrap sample).
pub fn grow_class_tree<T: Real>(
    rows: &[&[T]],
    labels: &[usize],
    mut idx: Vec<usize>,
    max_depth: usize,
    m_try: usize,
    rng: &mut ChaCha8Rng,
) -> Tree<T> {
    let dim = rows.first().map_or(0, |r| r.len());
    let mut b = ClassBuilder { rows, labels, max_depth, m_try, features: (0..dim).collect(), nodes: Vec::new() };
    b.grow(&mut idx, 0, rng);
    Tree { nodes: b.nodes }
}

/// Feature orders shared by every regression tree of a boosting run.
pub(crate) struct Presorted {
    pub order: Vec<Vec<usize>>,
}

impl Presorted {
    pub fn new<T: Real>(rows: &[&[T]]) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        let order = (0..dim)
            .map(|f| {
                let mut o: Vec<usize> = (0..rows.len()).collect();
                o.sort_by(|&a, &b| rows[a][f].widen().total_cmp(&rows[b][f].widen()).then(a.cmp(&b)));
                o
            })
            .collect();
        Self { order }
    }
}

/// Least-squares regression tree of the given depth; leaves hold the mean
/// target of their samples.
pub(crate) fn grow_regression_tree<T: Real>(rows: &[&[T]], target: &[T], sorted: &Presorted, depth: usize) -> Tree<T> {
    let n = rows.len();
    let mut member = vec![0usize; n];
    let mut nodes = Vec::new();
    grow_reg(rows, target, sorted, &mut member, 0, depth, &mut nodes);
    Tree { nodes }
}

fn grow_reg<T: Real>(
    rows: &[&[T]],
    target: &[T],
    sorted: &Presorted,
    member: &mut [usize],
    tag: usize,
    depth: usize,
    nodes: &mut Vec<Node<T>>,
) -> usize {
    let id = nodes.len();
    let (mut sum, mut count) = (T::zero(), 0usize);
    for (i, &m) in member.iter().enumerate() {
        if m == tag {
            sum = sum + target[i];
            count += 1;
        }
    }
    let mean = if count > 0 { sum / T::count(count) } else { T::zero() };
    nodes.push(Node::Leaf { class: 0, value: mean });
    if depth == 0 || count < 2 {
        return id;
    }
    let parent = sum * sum / T::count(count);
    let mut best: Option<(T, usize, T)> = None;
    for (f, order) in sorted.order.iter().enumerate() {
        let mut sl = T::zero();
        let mut nl = 0usize;
        let mut prev: Option<usize> = None;
        for &i in order {
            if member[i] != tag {
                continue;
            }
            if let Some(p) = prev {
                if rows[p][f] < rows[i][f] {
                    let sr = sum - sl;
                    let score = sl * sl / T::count(nl) + sr * sr / T::count(count - nl);
                    if score > parent && best.as_ref().is_none_or(|b| score > b.0) {
                        best = Some((score, f, midpoint(rows[p][f], rows[i][f])));
                    }
                }
            }
            sl = sl + target[i];
            nl += 1;
            prev = Some(i);
        }
    }
    let Some((_, feature, threshold)) = best else {
        return id;
    };
    // Fresh tags: the left child keeps a new tag, the right child another.
    let left_tag = 2 * tag + 1;
    let right_tag = 2 * tag + 2;
    for (i, m) in member.iter_mut().enumerate() {
        if *m == tag {
            *m = if rows[i][feature] <= threshold { left_tag } else { right_tag };
        }
    }
    let left = grow_reg(rows, target, sorted, member, left_tag, depth - 1, nodes);
    let right = grow_reg(rows, target, sorted, member, right_tag, depth - 1, nodes);
    nodes[id] = Node::Split { feature, threshold, left, right };
    id
}

/// Bagged Gini trees voting by plurality.
#[derive(Clone, Debug, PartialEq)]
pub struct Forest<T> {
    pub trees: Vec<Tree<T>>,
}

impl<T: Real> Forest<T> {
    /// Tree `i` draws its bootstrap sample and feature subsets from the
    /// ChaCha8 stream `i` of `seed`, so trees are built in parallel without
    /// affecting the result.
    pub fn fit(rows: &[&[T]], labels: &[usize], cfg: &TrainConfig) -> Result<Self> {
        let n = rows.len();
        let m_try = cfg.rf_feature_frac.candidates(rows[0].len());
        let trees = (0..cfg.rf_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(t as u64);
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                grow_class_tree(rows, labels, idx, cfg.rf_max_depth, m_try, &mut rng)
            })
            .collect();
        Ok(Self { trees })
    }

    pub fn votes(&self, v: &[T]) -> [usize; NUM_CLASSES] {
        let mut votes = [0usize; NUM_CLASSES];
        self.trees.iter().for_each(|t| votes[t.class(v)] += 1);
        votes
    }

    pub fn predict(&self, v: &[T]) -> usize {
        argmax_low(&self.votes(v))
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
    fn midpoint_separates() {
        assert_eq!(midpoint(1.0, 3.0), 2.0);
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a <= m && m < b);
    }

    #[test]
    fn single_tree_fits_distinct_points() {
        let blobs = gaussian_blobs::<f64>(20, 3, 1.0, 9);
        let (rows, labels) = unpack(&blobs);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tree = grow_class_tree(&rows, &labels, (0..rows.len()).collect(), 64, 3, &mut rng);
        assert!(rows.iter().zip(&labels).all(|(r, &l)| tree.class(r) == l));
    }

    #[test]
    fn depth_cap_respected() {
        let blobs = gaussian_blobs::<f64>(20, 3, 0.5, 9);
        let (rows, labels) = unpack(&blobs);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tree = grow_class_tree(&rows, &labels, (0..rows.len()).collect(), 2, 3, &mut rng);
        assert!(tree.depth() <= 2);
    }

    #[test]
    fn regression_tree_means() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let target = [1.0, 1.0, 1.0, 1.0, 5.0, 5.0, 7.0, 7.0];
        let t = grow_regression_tree(&refs, &target, &Presorted::new(&refs), 2);
        assert_eq!(t.value(&[0.0]), 1.0);
        assert_eq!(t.value(&[4.0]), 5.0);
        assert_eq!(t.value(&[7.0]), 7.0);
        assert!(t.depth() <= 2);
    }

    #[test]
    fn forest_fits_blobs() {
        let blobs = gaussian_blobs::<f64>(40, 8, 5.0, 3);
        let (rows, labels) = unpack(&blobs);
        let cfg = TrainConfig { rf_trees: 100, rf_max_depth: 12, ..Default::default() };
        let f = Forest::fit(&rows, &labels, &cfg).unwrap();
        let acc = rows.iter().zip(&labels).filter(|(r, &l)| f.predict(r) == l).count() as f64 / rows.len() as f64;
        assert!(acc >= 0.99, "train accuracy {acc}");
        let test = gaussian_blobs::<f64>(40, 8, 5.0, 4);
        let (trows, tlabels) = unpack(&test);
        let acc = trows.iter().zip(&tlabels).filter(|(r, &l)| f.predict(r) == l).count() as f64 / trows.len() as f64;
        assert!(acc >= 0.95, "held-out accuracy {acc}");
    }
}
