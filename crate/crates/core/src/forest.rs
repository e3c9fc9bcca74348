//! Random forest classifier: bootstrap-sampled CART trees grown on Gini
//! impurity, majority voting, and mean-decrease-in-impurity importances.
//!
//! All tie-breaking is deterministic. Tree `t` draws from
//! `rng::substream(seed, t)`: first the `n` bootstrap indices, then, node by
//! node in depth-first (left before right) order, a partial Fisher-Yates
//! shuffle of the feature indices.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Dense row-major `f32` matrix, one sample per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Argument(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(Matrix { rows, cols, values })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.as_ref().len() != cols {
                return Err(Error::Argument("rows have different lengths".into()));
            }
            values.extend_from_slice(r.as_ref());
        }
        Ok(Matrix { rows: rows.len(), cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.cols + j]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// The rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Matrix { rows: indices.len(), cols: self.cols, values }
    }

    /// Horizontal concatenation.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::Argument("hstack needs equal row counts".into()));
        }
        let mut values = Vec::with_capacity(self.values.len() + other.values.len());
        for i in 0..self.rows {
            values.extend_from_slice(self.row(i));
            values.extend_from_slice(other.row(i));
        }
        Ok(Matrix { rows: self.rows, cols: self.cols + other.cols, values })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_trees: usize,
    /// Features examined per split; `None` means `ceil(sqrt(n_features))`.
    pub features_per_split: Option<usize>,
    /// `None` grows trees until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_trees: 400,
            features_per_split: None,
            max_depth: None,
            min_samples_split: 2,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn features_per_split_for(&self, n_features: usize) -> usize {
        self.features_per_split.unwrap_or_else(|| ceil_sqrt(n_features))
    }
}

fn ceil_sqrt(n: usize) -> usize {
    let mut r = Float::sqrt(n as f64) as usize;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        /// Samples with `x[feature] <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        n_samples: usize,
        /// Parent Gini minus the sample-weighted Gini of the children.
        impurity_decrease: f64,
    },
    Leaf {
        counts: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_features: usize,
    n_classes: usize,
    n_samples: usize,
}

impl DecisionTree {
    /// Builds a tree from explicit nodes; node 0 is the root.
    pub fn from_nodes(nodes: Vec<Node>, n_features: usize, n_classes: usize) -> Result<Self> {
        let n_samples = match nodes.first() {
            Some(Node::Split { n_samples, .. }) => *n_samples,
            Some(Node::Leaf { counts }) => counts.iter().map(|&c| c as usize).sum(),
            None => return Err(Error::Argument("a tree needs at least one node".into())),
        };
        for node in &nodes {
            match node {
                Node::Split { feature, threshold, left, right, .. } => {
                    if *feature >= n_features || !threshold.is_finite() || *left >= nodes.len() || *right >= nodes.len()
                    {
                        return Err(Error::Argument("malformed split node".into()));
                    }
                }
                Node::Leaf { counts } => {
                    if counts.len() != n_classes {
                        return Err(Error::Argument("leaf histogram has the wrong class count".into()));
                    }
                }
            }
        }
        Ok(DecisionTree { nodes, n_features, n_classes, n_samples })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    fn leaf(&self, x: &[f32]) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if (x[*feature] as f64) <= *threshold { *left } else { *right };
                }
                Node::Leaf { counts } => return counts,
            }
        }
    }

    /// Class index with the largest leaf count (lowest index on ties).
    pub fn predict_index(&self, x: &[f32]) -> usize {
        argmax_first(self.leaf(x))
    }

    /// Per-feature sum of `n_node / n_root * impurity_decrease`.
    pub fn raw_importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for node in &self.nodes {
            if let Node::Split { feature, n_samples, impurity_decrease, .. } = node {
                imp[*feature] += *n_samples as f64 / self.n_samples as f64 * impurity_decrease;
            }
        }
        imp
    }
}

fn argmax_first<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn gini(counts: &[u32], total: u32) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| Float::powi(c as f64 / t, 2)).sum::<f64>()
}

/// Validated training data with labels mapped to class indices.
#[derive(Debug, Clone)]
pub struct TrainingSet<'a> {
    x: &'a Matrix,
    y: Vec<usize>,
    classes: Vec<usize>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    /// Number of samples (in sorted order) that go left.
    n_left: usize,
    decrease: f64,
}

impl<'a> TrainingSet<'a> {
    pub fn new(x: &'a Matrix, labels: &[usize]) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(Error::Argument("training matrix is empty".into()));
        }
        if x.rows() != labels.len() {
            return Err(Error::Argument(format!("{} rows but {} labels", x.rows(), labels.len())));
        }
        if x.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("training features contain non-finite values".into()));
        }
        let mut classes = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let y = labels.iter().map(|l| classes.binary_search(l).expect("label is present")).collect();
        Ok(TrainingSet { x, y, classes })
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    fn check_config(&self, cfg: &TrainConfig) -> Result<usize> {
        if cfg.n_trees == 0 {
            return Err(Error::Argument("n_trees must be at least 1".into()));
        }
        if cfg.min_samples_split < 2 {
            return Err(Error::Argument("min_samples_split must be at least 2".into()));
        }
        let p = self.x.cols();
        let m = cfg.features_per_split_for(p);
        if m == 0 || m > p {
            return Err(Error::Argument(format!("features_per_split {m} outside [1, {p}]")));
        }
        Ok(m)
    }

    /// Grows tree number `tree_index` of a forest trained with `cfg`.
    pub fn fit_tree(&self, cfg: &TrainConfig, tree_index: usize) -> Result<DecisionTree> {
        let mtry = self.check_config(cfg)?;
        let n = self.x.rows();
        let p = self.x.cols();
        let k = self.classes.len();
        let mut r = rng::substream(cfg.seed, tree_index as u64);

        let mut samples: Vec<usize> =
            if cfg.bootstrap { (0..n).map(|_| r.gen_range(0..n)).collect() } else { (0..n).collect() };
        let mut features: Vec<usize> = (0..p).collect();
        let mut nodes: Vec<Node> = Vec::new();
        // (node slot, sample range start, end, depth)
        let mut stack = vec![(0usize, 0usize, samples.len(), 0usize)];
        nodes.push(Node::Leaf { counts: Vec::new() });

        while let Some((slot, lo, hi, depth)) = stack.pop() {
            let mut counts = vec![0u32; k];
            for &s in &samples[lo..hi] {
                counts[self.y[s]] += 1;
            }
            let size = hi - lo;
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_capped = cfg.max_depth.is_some_and(|d| depth >= d);
            if pure || size < cfg.min_samples_split || depth_capped {
                nodes[slot] = Node::Leaf { counts };
                continue;
            }
            let Some(choice) = self.best_split(&mut samples[lo..hi], &counts, &mut features, mtry, &mut r) else {
                nodes[slot] = Node::Leaf { counts };
                continue;
            };
            // Leave the slice sorted by the winning feature so the split is a prefix.
            let f = choice.feature;
            samples[lo..hi].sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)));
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf { counts: Vec::new() });
            nodes.push(Node::Leaf { counts: Vec::new() });
            nodes[slot] = Node::Split {
                feature: f,
                threshold: choice.threshold,
                left,
                right,
                n_samples: size,
                impurity_decrease: choice.decrease,
            };
            let mid = lo + choice.n_left;
            stack.push((right, mid, hi, depth + 1));
            stack.push((left, lo, mid, depth + 1));
        }
        Ok(DecisionTree { nodes, n_features: p, n_classes: k, n_samples: samples.len() })
    }

    fn best_split(
        &self,
        samples: &mut [usize],
        counts: &[u32],
        features: &mut [usize],
        mtry: usize,
        r: &mut rng::Rng,
    ) -> Option<SplitChoice> {
        let p = features.len();
        let mut best: Option<SplitChoice> = None;
        if mtry == p {
            for f in 0..p {
                self.consider(f, samples, counts, &mut best);
            }
            return best;
        }
        for i in 0..mtry {
            let j = r.gen_range(i..p);
            features.swap(i, j);
        }
        let mut chosen = features[..mtry].to_vec();
        chosen.sort_unstable();
        for f in chosen {
            self.consider(f, samples, counts, &mut best);
        }
        // Keep drawing features until one separates the node.
        let mut i = mtry;
        while best.is_none() && i < p {
            let j = r.gen_range(i..p);
            features.swap(i, j);
            self.consider(features[i], samples, counts, &mut best);
            i += 1;
        }
        best
    }

    fn consider(&self, f: usize, samples: &mut [usize], counts: &[u32], best: &mut Option<SplitChoice>) {
        let x = self.x;
        samples.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)));
        let n = samples.len() as u32;
        let parent = gini(counts, n);
        let mut left = vec![0u32; counts.len()];
        let mut right = counts.to_vec();
        for i in 0..samples.len() - 1 {
            let c = self.y[samples[i]];
            left[c] += 1;
            right[c] -= 1;
            let (a, b) = (x.get(samples[i], f), x.get(samples[i + 1], f));
            if a >= b {
                continue;
            }
            let nl = i as u32 + 1;
            let nr = n - nl;
            let decrease =
                parent - (nl as f64 / n as f64) * gini(&left, nl) - (nr as f64 / n as f64) * gini(&right, nr);
            if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                *best = Some(SplitChoice {
                    feature: f,
                    threshold: (a as f64 + b as f64) / 2.0,
                    n_left: nl as usize,
                    decrease,
                });
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    classes: Vec<usize>,
    n_features: usize,
    importances: Vec<f64>,
}

impl RandomForest {
    pub fn fit(x: &Matrix, y: &[usize], cfg: &TrainConfig) -> Result<Self> {
        let set = TrainingSet::new(x, y)?;
        let trees = (0..cfg.n_trees).map(|t| set.fit_tree(cfg, t)).collect::<Result<Vec<_>>>()?;
        RandomForest::from_trees(trees, set.classes().to_vec(), x.cols())
    }

    /// Assembles a forest from grown trees and computes importances.
    pub fn from_trees(trees: Vec<DecisionTree>, classes: Vec<usize>, n_features: usize) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Argument("a forest needs at least one tree".into()));
        }
        if trees.iter().any(|t| t.n_features != n_features || t.n_classes != classes.len()) {
            return Err(Error::Argument("trees disagree with the forest shape".into()));
        }
        let mut importances = vec![0.0; n_features];
        for t in &trees {
            for (acc, v) in importances.iter_mut().zip(t.raw_importances()) {
                *acc += v;
            }
        }
        for v in importances.iter_mut() {
            *v /= trees.len() as f64;
        }
        let total: f64 = importances.iter().sum();
        if total > 0.0 {
            for v in importances.iter_mut() {
                *v /= total;
            }
        }
        Ok(RandomForest { trees, classes, n_features, importances })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Sorted distinct training labels.
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Mean decrease in Gini impurity per feature, normalised to sum to 1
    /// (all zero when no tree ever split).
    pub fn feature_importances(&self) -> &[f64] {
        &self.importances
    }

    /// Per-class vote counts for `x`.
    pub fn votes(&self, x: &[f32]) -> Result<Vec<usize>> {
        if x.len() != self.n_features {
            return Err(Error::Argument(format!("expected {} features, got {}", self.n_features, x.len())));
        }
        let mut votes = vec![0usize; self.classes.len()];
        for t in &self.trees {
            votes[t.predict_index(x)] += 1;
        }
        Ok(votes)
    }

    /// Majority vote; ties go to the smaller label.
    pub fn predict(&self, x: &[f32]) -> Result<usize> {
        Ok(self.classes[argmax_first(&self.votes(x)?)])
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<usize>> {
        (0..x.rows()).map(|i| self.predict(x.row(i))).collect()
    }
}
