//! CART trees with Gini impurity and bootstrap ensembles of them.
//!
//! Features are visited in a seeded random order at every node; with
//! `max_features = Some(m)` the search stops after `m` non-constant features.
//! Thresholds sit halfway between consecutive distinct values and rows with
//! `x <= threshold` go left. A node is split whenever some split exists,
//! even a zero-gain one, so an unbounded tree separates all distinct rows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use studentgraph_core::{par, Matrix};

const LEAF: u32 = u32::MAX;
/// Values closer than this are treated as equal when placing thresholds.
const FEATURE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeOptions {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: Option<usize>,
}

impl Default for TreeOptions {
    fn default() -> Self {
        Self { max_depth: None, min_samples_split: 2, max_features: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    /// Share of class 1 among training rows reaching the node.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    opts: &'a TreeOptions,
    rng: ChaCha8Rng,
    features: Vec<usize>,
    buf: Vec<(f64, u8)>,
}

impl Builder<'_> {
    fn best_split(&mut self, idx: &[u32]) -> Option<Split> {
        let d = self.x.cols();
        let n = idx.len();
        let total1 = idx.iter().filter(|&&i| self.y[i as usize] == 1).count() as f64;
        let total0 = n as f64 - total1;
        let budget = self.opts.max_features.unwrap_or(d).min(d);
        let mut best: Option<Split> = None;
        let mut visited = 0;
        let mut remaining = d;
        while visited < budget && remaining > 0 {
            // incremental Fisher-Yates over the feature list
            let pick = self.rng.random_range(0..remaining);
            remaining -= 1;
            self.features.swap(pick, remaining);
            let f = self.features[remaining];
            self.buf.clear();
            self.buf.extend(idx.iter().map(|&i| (self.x[(i as usize, f)], self.y[i as usize])));
            self.buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if self.buf[n - 1].0 <= self.buf[0].0 + FEATURE_EPS {
                continue;
            }
            visited += 1;
            let (mut l0, mut l1) = (0.0, 0.0);
            for p in 0..n - 1 {
                if self.buf[p].1 == 1 {
                    l1 += 1.0;
                } else {
                    l0 += 1.0;
                }
                let (v, next) = (self.buf[p].0, self.buf[p + 1].0);
                if next <= v + FEATURE_EPS {
                    continue;
                }
                let nl = (p + 1) as f64;
                let nr = n as f64 - nl;
                let (r0, r1) = (total0 - l0, total1 - l1);
                // maximizing this minimizes weighted child Gini impurity
                let score = (l0 * l0 + l1 * l1) / nl + (r0 * r0 + r1 * r1) / nr;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mut threshold = 0.5 * (v + next);
                    if threshold >= next || !threshold.is_finite() {
                        threshold = v;
                    }
                    best = Some(Split { feature: f, threshold, score });
                }
            }
        }
        best
    }
}

impl DecisionTree {
    pub fn leaf(value: f64) -> Self {
        Self { nodes: vec![Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value }] }
    }

    pub fn fit(x: &Matrix, y: &[u8], opts: &TreeOptions, seed: u64) -> Self {
        let idx: Vec<u32> = (0..x.rows() as u32).collect();
        Self::fit_rows(x, y, idx, opts, ChaCha8Rng::seed_from_u64(seed))
    }

    /// Grows a tree on the given row multiset (duplicates act as weights).
    fn fit_rows(x: &Matrix, y: &[u8], mut idx: Vec<u32>, opts: &TreeOptions, rng: ChaCha8Rng) -> Self {
        let mut b = Builder { x, y, opts, rng, features: (0..x.cols()).collect(), buf: Vec::with_capacity(idx.len()) };
        let mut nodes: Vec<Node> = Vec::new();
        // (node id, start, end, depth)
        let mut stack = vec![(0usize, 0usize, idx.len(), 0usize)];
        nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value: 0.0 });
        while let Some((id, start, end, depth)) = stack.pop() {
            let rows = &mut idx[start..end];
            let n = rows.len();
            let pos = rows.iter().filter(|&&i| y[i as usize] == 1).count();
            nodes[id].value = pos as f64 / n as f64;
            let pure = pos == 0 || pos == n;
            if pure || n < opts.min_samples_split || opts.max_depth.is_some_and(|m| depth >= m) {
                continue;
            }
            let Some(split) = b.best_split(rows) else { continue };
            // partition rows in place: left block first
            let mut mid = 0;
            for k in 0..n {
                if x[(rows[k] as usize, split.feature)] <= split.threshold {
                    rows.swap(k, mid);
                    mid += 1;
                }
            }
            let left = nodes.len();
            nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value: 0.0 });
            nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value: 0.0 });
            nodes[id].feature = split.feature as u32;
            nodes[id].threshold = split.threshold;
            nodes[id].left = left as u32;
            nodes[id].right = left as u32 + 1;
            stack.push((left + 1, start + mid, end, depth + 1));
            stack.push((left, start, start + mid, depth + 1));
        }
        Self { nodes }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            let node = &self.nodes[k];
            if node.feature == LEAF {
                return node.value;
            }
            k = if row[node.feature as usize] <= node.threshold { node.left } else { node.right } as usize;
        }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &DecisionTree, k: usize) -> usize {
            let n = &t.nodes[k];
            if n.feature == LEAF {
                0
            } else {
                1 + walk(t, n.left as usize).max(walk(t, n.right as usize))
            }
        }
        walk(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.feature == LEAF).count()
    }
}

/// Bootstrap ensemble: random forest when `max_features` is set, plain
/// bagging of full trees otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
}

impl Forest {
    pub fn fit(x: &Matrix, y: &[u8], n_trees: usize, opts: &TreeOptions, seed: u64) -> Self {
        let n = x.rows();
        let trees = par::map_range(n_trees, |t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64 + 1);
            let idx: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
            DecisionTree::fit_rows(x, y, idx, opts, rng)
        });
        Self { trees }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        let k = self.trees.len() as f64;
        par::map_range(x.rows(), |i| {
            let row = x.row(i);
            self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / k
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor() -> (Matrix, Vec<u8>) {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        (x, vec![0, 1, 1, 0])
    }

    #[test]
    fn unbounded_tree_fits_xor() {
        let (x, y) = xor();
        let t = DecisionTree::fit(&x, &y, &TreeOptions::default(), 0);
        let p = t.predict_proba(&x);
        assert_eq!(p, vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(t.depth(), 2);
        assert_eq!(t.n_leaves(), 4);
    }

    #[test]
    fn depth_limit_respected() {
        let (x, y) = xor();
        let opts = TreeOptions { max_depth: Some(1), ..TreeOptions::default() };
        let t = DecisionTree::fit(&x, &y, &opts, 0);
        assert_eq!(t.depth(), 1);
        assert!(t.predict_proba(&x).iter().all(|&p| p == 0.5));
    }

    #[test]
    fn threshold_between_values() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        let t = DecisionTree::fit(&x, &[0, 0, 1, 1], &TreeOptions::default(), 0);
        assert_eq!(t.nodes[0].threshold, 2.5);
        assert_eq!(t.nodes.len(), 3);
    }

    #[test]
    fn identical_rows_with_mixed_labels_stay_a_leaf() {
        let x = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let t = DecisionTree::fit(&x, &[0, 1, 1], &TreeOptions::default(), 0);
        assert_eq!(t.nodes.len(), 1);
        approx::assert_relative_eq!(t.nodes[0].value, 2.0 / 3.0);
    }

    #[test]
    fn forest_is_seed_deterministic() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 7) as f64, (i % 5) as f64, i as f64 / 10.0]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<u8> = (0..60).map(|i| u8::from((i % 7) + (i % 5) > 5)).collect();
        let opts = TreeOptions { max_features: Some(1), ..TreeOptions::default() };
        let a = Forest::fit(&x, &y, 8, &opts, 42);
        let b = Forest::fit(&x, &y, 8, &opts, 42);
        let c = Forest::fit(&x, &y, 8, &opts, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
