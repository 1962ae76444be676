//! CART decision tree with Gini impurity.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{ClassifyError, Classifier, LabeledSet};

pub fn gini(proportions: &[f64]) -> Result<f64, ClassifyError> {
    let total: f64 = proportions.iter().sum();
    if proportions.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(ClassifyError::Parameter(format!("not a probability vector: {proportions:?}")));
    }
    Ok(proportions.iter().map(|p| p * (1.0 - p)).sum())
}

fn gini_counts(n0: usize, n1: usize) -> f64 {
    let n = (n0 + n1) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (n0 as f64 / n, n1 as f64 / n);
    p0 * (1.0 - p0) + p1 * (1.0 - p1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Weighted impurity decrease, `n_node / n_root * (gini - child gini)`.
        gain: f64,
    },
    Leaf {
        /// Class proportions `[p0, p1]`.
        proportions: [f64; 2],
        n: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub n_features: usize,
    /// Root is node 0.
    pub nodes: Vec<Node>,
}

impl TreeModel {
    pub fn leaf(&self, x: &[f64]) -> [f64; 2] {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Split { feature, threshold, left, right, .. } => {
                    k = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { proportions, .. } => return *proportions,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &TreeModel, k: usize) -> usize {
            match &t.nodes[k] {
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }

    /// Impurity-decrease importance per feature, normalized to sum 1 (all
    /// zero for a single-leaf tree).
    pub fn importance(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for n in &self.nodes {
            if let Node::Split { feature, gain, .. } = n {
                imp[*feature] += gain;
            }
        }
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            imp.iter_mut().for_each(|v| *v /= total);
        }
        imp
    }
}

impl Classifier for TreeModel {
    fn predict_row(&self, x: &[f64]) -> u8 {
        u8::from(self.leaf(x)[1] > 0.5)
    }

    fn score_row(&self, x: &[f64]) -> f64 {
        self.leaf(x)[1]
    }
}

/// Best split of `idx`: `(feature, threshold, weighted child gini)`.
/// Candidates are scanned in feature then threshold order and replaced only
/// on strict improvement.
pub(crate) fn best_split(data: &LabeledSet, idx: &[usize], features: &[usize]) -> Option<(usize, f64, f64)> {
    let n = idx.len() as f64;
    let n1_total = idx.iter().filter(|&&i| data.y[i] == 1).count();
    let mut best: Option<(usize, f64, f64)> = None;
    let mut sorted = idx.to_vec();
    for &f in features {
        sorted.sort_by(|&a, &b| data.x[a][f].total_cmp(&data.x[b][f]));
        let (mut l0, mut l1) = (0usize, 0usize);
        for w in 0..sorted.len() - 1 {
            if data.y[sorted[w]] == 1 {
                l1 += 1;
            } else {
                l0 += 1;
            }
            let (a, b) = (data.x[sorted[w]][f], data.x[sorted[w + 1]][f]);
            if a == b {
                continue;
            }
            let nl = (w + 1) as f64;
            let r1 = n1_total - l1;
            let r0 = idx.len() - (w + 1) - r1;
            let score = nl / n * gini_counts(l0, l1) + (n - nl) / n * gini_counts(r0, r1);
            if best.is_none_or(|(_, _, s)| score < s) {
                let mut t = a + (b - a) / 2.0;
                if t >= b {
                    t = a;
                }
                best = Some((f, t, score));
            }
        }
    }
    best
}

/// Grows a tree on the rows `idx` (repeats allowed). `subset` picks the
/// candidate features at each node.
pub(crate) fn grow<R: Rng>(
    data: &LabeledSet,
    idx: Vec<usize>,
    config: &TreeConfig,
    max_features: usize,
    rng: &mut R,
) -> TreeModel {
    let d = data.n_features();
    let root_n = idx.len() as f64;
    let mut nodes = Vec::new();
    // (rows, depth, parent slot to patch)
    let mut stack: Vec<(Vec<usize>, usize, Option<(usize, bool)>)> = vec![(idx, 0, None)];
    while let Some((rows, depth, parent)) = stack.pop() {
        let here = nodes.len();
        if let Some((p, is_left)) = parent {
            if let Node::Split { left, right, .. } = &mut nodes[p] {
                *(if is_left { left } else { right }) = here;
            }
        }
        let n1 = rows.iter().filter(|&&i| data.y[i] == 1).count();
        let n0 = rows.len() - n1;
        let impurity = gini_counts(n0, n1);
        let can_split = impurity > 0.0
            && rows.len() >= config.min_samples_split.max(2)
            && config.max_depth.is_none_or(|m| depth < m);
        let split = if can_split {
            let features: Vec<usize> = if max_features >= d {
                (0..d).collect()
            } else {
                let mut f = sample(rng, d, max_features).into_vec();
                f.sort_unstable();
                f
            };
            best_split(data, &rows, &features)
        } else {
            None
        };
        match split {
            Some((feature, threshold, child)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| data.x[i][feature] <= threshold);
                nodes.push(Node::Split {
                    feature,
                    threshold,
                    left: 0,
                    right: 0,
                    gain: rows.len() as f64 / root_n * (impurity - child),
                });
                // right pushed first so the left subtree is numbered first
                stack.push((r, depth + 1, Some((here, false))));
                stack.push((l, depth + 1, Some((here, true))));
            }
            None => {
                let n = rows.len();
                let p1 = if n == 0 { 0.0 } else { n1 as f64 / n as f64 };
                nodes.push(Node::Leaf { proportions: [1.0 - p1, p1], n });
            }
        }
    }
    TreeModel { n_features: d, nodes }
}

pub fn train_tree(train: &LabeledSet, config: &TreeConfig) -> Result<TreeModel, ClassifyError> {
    if train.is_empty() {
        return Err(ClassifyError::Empty);
    }
    let d = train.n_features();
    // full feature set: the rng is never consulted
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    Ok(grow(train, (0..train.len()).collect(), config, d, &mut rng))
}
