//! Decision tree, random forest and RBF-kernel SVM classifiers with
//! support-weighted evaluation metrics.

mod forest;
mod metrics;
mod svm;
mod tree;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::utility::{FeatureRow, MODEL_FEATURES};

pub use forest::{feature_importance, train_forest, train_forest_with, ForestConfig, ForestModel, Importance};
pub use metrics::{auc, confusion_matrix, evaluate_predictions, roc_curve, EvalReport, RocPoint};
pub use svm::{gram_matrix, grid_search, rbf_kernel, train_svm, train_svm_with, GridResult, SvmConfig, SvmModel};
pub use tree::{gini, train_tree, Node, TreeConfig, TreeModel};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("empty data set")]
    Empty,
    #[error("training set has a single class")]
    SingleClass,
    #[error("invalid data: {0}")]
    Data(String),
    #[error("solver did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("model document: {0}")]
    Document(String),
}

/// Per-feature centering and scaling fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population sd; constant features keep scale 1.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len().max(1) as f64;
        let mean: Vec<f64> = (0..d).map(|k| x.iter().map(|r| r[k]).sum::<f64>() / n).collect();
        let scale = (0..d)
            .map(|k| {
                let var = x.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn inverse_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
    /// Set once the rows have been standardized.
    pub standardizer: Option<Standardizer>,
}

impl LabeledSet {
    pub fn new(names: Vec<String>, x: Vec<Vec<f64>>, y: Vec<u8>) -> Result<Self, ClassifyError> {
        if x.len() != y.len() {
            return Err(ClassifyError::Data(format!("{} rows but {} labels", x.len(), y.len())));
        }
        for (i, (row, &l)) in x.iter().zip(&y).enumerate() {
            if l > 1 {
                return Err(ClassifyError::Data(format!("row {i}: label {l}")));
            }
            if row.len() != names.len() {
                return Err(ClassifyError::Data(format!("row {i}: {} values for {} names", row.len(), names.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ClassifyError::Data(format!("row {i}: non-finite value")));
            }
        }
        Ok(LabeledSet { names, x, y, standardizer: None })
    }

    /// Complete rows of a feature table, model features only.
    pub fn from_feature_rows(rows: &[FeatureRow]) -> Result<Self, ClassifyError> {
        let (y, x) = rows
            .iter()
            .filter_map(FeatureRow::complete)
            .map(|(y, v)| (y, v.to_vec()))
            .unzip();
        Self::new(MODEL_FEATURES.iter().map(|s| s.to_string()).collect(), x, y)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledSet {
        LabeledSet {
            names: self.names.clone(),
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            standardizer: self.standardizer.clone(),
        }
    }

    pub fn standardized(&self, s: &Standardizer) -> LabeledSet {
        LabeledSet {
            names: self.names.clone(),
            x: self.x.iter().map(|r| s.transform_row(r)).collect(),
            y: self.y.clone(),
            standardizer: Some(s.clone()),
        }
    }
}

/// Shuffled split with `floor(train_fraction * n)` training rows.
pub fn split_train_test(data: &LabeledSet, train_fraction: f64, seed: u64) -> Result<(LabeledSet, LabeledSet), ClassifyError> {
    if data.is_empty() {
        return Err(ClassifyError::Empty);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ClassifyError::Parameter(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = (train_fraction * data.len() as f64).floor() as usize;
    Ok((data.subset(&idx[..k]), data.subset(&idx[k..])))
}

/// Fits a standardizer on `train` and applies it to both splits.
pub fn standardize_split(train: &LabeledSet, test: &LabeledSet) -> (LabeledSet, LabeledSet) {
    let s = Standardizer::fit(&train.x);
    (train.standardized(&s), test.standardized(&s))
}

pub trait Classifier {
    fn predict_row(&self, x: &[f64]) -> u8;
    /// Ranking score for ROC analysis; larger means more likely class 1.
    fn score_row(&self, x: &[f64]) -> f64;
}

pub fn evaluate(model: &dyn Classifier, test: &LabeledSet) -> EvalReport {
    let pred: Vec<u8> = test.x.iter().map(|r| model.predict_row(r)).collect();
    let scores: Vec<f64> = test.x.iter().map(|r| model.score_row(r)).collect();
    evaluate_predictions(&test.y, &pred, &scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Tree(TreeModel),
    Forest(ForestModel),
    Svm(SvmModel),
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Tree(_) => "dt",
            Model::Forest(_) => "rf",
            Model::Svm(_) => "svm",
        }
    }

    pub fn as_classifier(&self) -> &dyn Classifier {
        match self {
            Model::Tree(m) => m,
            Model::Forest(m) => m,
            Model::Svm(m) => m,
        }
    }
}

pub const MODEL_FORMAT: &str = "lcstim-model";
pub const MODEL_VERSION: u32 = 1;

/// Serialized model with the preprocessing needed to score raw rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub feature_names: Vec<String>,
    pub standardizer: Option<Standardizer>,
    pub model: Model,
}

impl ModelDocument {
    pub fn new(model: Model, feature_names: Vec<String>, standardizer: Option<Standardizer>) -> Self {
        ModelDocument {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            feature_names,
            standardizer,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String, ClassifyError> {
        serde_json::to_string_pretty(self).map_err(|e| ClassifyError::Document(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, ClassifyError> {
        let doc: ModelDocument = serde_json::from_str(s).map_err(|e| ClassifyError::Document(e.to_string()))?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(ClassifyError::Document(format!("unsupported {} v{}", doc.format, doc.version)));
        }
        Ok(doc)
    }

    /// Predicted class and score for a raw (unstandardized) row.
    pub fn predict_raw(&self, row: &[f64]) -> (u8, f64) {
        let x = match &self.standardizer {
            Some(s) => s.transform_row(row),
            None => row.to_vec(),
        };
        let m = self.model.as_classifier();
        (m.predict_row(&x), m.score_row(&x))
    }
}
