//! Bagged trees with per-node random feature subsets.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, TreeConfig, TreeModel};
use super::{ClassifyError, Classifier, LabeledSet};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per node; `None` means `floor(sqrt(d))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub tree: TreeConfig,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_features: None,
            bootstrap: true,
            tree: TreeConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub max_features: usize,
    /// Seed each tree was grown from.
    pub tree_seeds: Vec<u64>,
    pub trees: Vec<TreeModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub feature: String,
    pub mean: f64,
    pub sd: f64,
}

fn grow_one(train: &LabeledSet, config: &ForestConfig, m: usize, seed: u64) -> TreeModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = train.len();
    let idx = if config.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    grow(train, idx, &config.tree, m, &mut rng)
}

impl ForestModel {
    /// Regrows tree `k` from its recorded seed.
    pub fn regrow(&self, train: &LabeledSet, k: usize) -> TreeModel {
        grow_one(train, &self.config, self.max_features, self.tree_seeds[k])
    }

    /// Share of trees voting for class 1.
    pub fn vote_fraction(&self, x: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.predict_row(x) == 1).count();
        votes as f64 / self.trees.len() as f64
    }

    pub fn mean_probability(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.leaf(x)[1]).sum::<f64>() / self.trees.len() as f64
    }
}

impl Classifier for ForestModel {
    fn predict_row(&self, x: &[f64]) -> u8 {
        let v = self.vote_fraction(x);
        if v == 0.5 {
            u8::from(self.mean_probability(x) > 0.5)
        } else {
            u8::from(v > 0.5)
        }
    }

    fn score_row(&self, x: &[f64]) -> f64 {
        self.vote_fraction(x)
    }
}

pub fn train_forest(train: &LabeledSet, config: &ForestConfig) -> Result<ForestModel, ClassifyError> {
    train_forest_with(train, config, Exec::default())
}

pub fn train_forest_with(train: &LabeledSet, config: &ForestConfig, exec: Exec) -> Result<ForestModel, ClassifyError> {
    if train.is_empty() {
        return Err(ClassifyError::Empty);
    }
    if config.n_trees == 0 {
        return Err(ClassifyError::Parameter("n_trees must be positive".into()));
    }
    let d = train.n_features();
    let m = config
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().floor() as usize)
        .clamp(1, d.max(1));
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let tree_seeds: Vec<u64> = (0..config.n_trees).map(|_| master.next_u64()).collect();
    let trees = exec.map(&tree_seeds, |&s| grow_one(train, config, m, s));
    Ok(ForestModel {
        config: *config,
        max_features: m,
        tree_seeds,
        trees,
    })
}

/// Per-feature mean and population sd of per-tree importances, sorted by
/// decreasing mean (ties by feature order).
pub fn feature_importance(forest: &ForestModel, names: &[String]) -> Vec<Importance> {
    let per_tree: Vec<Vec<f64>> = forest.trees.iter().map(TreeModel::importance).collect();
    let t = per_tree.len() as f64;
    let d = names.len();
    let mut out: Vec<Importance> = (0..d)
        .map(|k| {
            let mean = per_tree.iter().map(|v| v[k]).sum::<f64>() / t;
            let var = per_tree.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / t;
            Importance {
                feature: names[k].clone(),
                mean,
                sd: var.sqrt(),
            }
        })
        .collect();
    out.sort_by(|a, b| b.mean.total_cmp(&a.mean));
    out
}
