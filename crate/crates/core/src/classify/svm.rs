//! Soft-margin SVM with an RBF kernel, trained by SMO with second-order
//! working-set selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifyError, Classifier, LabeledSet};
use crate::exec::Exec;

const TAU: f64 = 1e-12;

pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> Result<f64, ClassifyError> {
    if a.len() != b.len() {
        return Err(ClassifyError::Parameter(format!("dimension mismatch {} vs {}", a.len(), b.len())));
    }
    Ok(rbf(a, b, gamma))
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

pub fn gram_matrix(x: &[Vec<f64>], gamma: f64, exec: Exec) -> Vec<Vec<f64>> {
    exec.map(x, |a| x.iter().map(|b| rbf(a, b, gamma)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub cost: f64,
    /// `None` means `1 / d`.
    pub gamma: Option<f64>,
    /// Stop when the maximal KKT violation falls below this.
    pub eps: f64,
    pub max_iterations: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            cost: 1.0,
            gamma: None,
            eps: 1e-3,
            max_iterations: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub gamma: f64,
    pub cost: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// Dual coefficients `α_i ∈ [0, C]` of the support vectors.
    pub alphas: Vec<f64>,
    /// Labels of the support vectors in {-1, +1}.
    pub labels: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(self.alphas.iter().zip(&self.labels))
            .map(|(sv, (a, y))| a * y * rbf(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias
    }
}

impl Classifier for SvmModel {
    fn predict_row(&self, x: &[f64]) -> u8 {
        u8::from(self.decision(x) > 0.0)
    }

    fn score_row(&self, x: &[f64]) -> f64 {
        self.decision(x)
    }
}

pub fn train_svm(train: &LabeledSet, config: &SvmConfig) -> Result<SvmModel, ClassifyError> {
    train_svm_with(train, config, Exec::default())
}

pub fn train_svm_with(train: &LabeledSet, config: &SvmConfig, exec: Exec) -> Result<SvmModel, ClassifyError> {
    let n = train.len();
    let n1 = train.y.iter().filter(|&&v| v == 1).count();
    if n1 == 0 || n1 == n {
        return Err(ClassifyError::SingleClass);
    }
    if !(config.cost > 0.0) {
        return Err(ClassifyError::Parameter("cost must be positive".into()));
    }
    let gamma = config.gamma.unwrap_or(1.0 / train.n_features().max(1) as f64);
    let c = config.cost;
    let y: Vec<f64> = train.y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
    let k = gram_matrix(&train.x, gamma, exec);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let up = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] < c) || (y[t] < 0.0 && a[t] > 0.0);
    let low = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] > 0.0) || (y[t] < 0.0 && a[t] < c);

    let mut iter = 0;
    while iter < config.max_iterations {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(t, &alpha) && -y[t] * grad[t] >= gmax {
                if -y[t] * grad[t] > gmax || i == usize::MAX {
                    i = t;
                }
                gmax = -y[t] * grad[t];
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(t, &alpha) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i != usize::MAX && v < gmax {
                let b = gmax - v;
                let mut a = k[i][i] + k[t][t] - 2.0 * k[i][t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < config.eps {
            break;
        }
        iter += 1;

        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        let mut quad = k[i][i] + k[j][j] - 2.0 * k[i][j];
        if quad <= 0.0 {
            quad = TAU;
        }
        let (mut ai, mut aj) = (ai_old, aj_old);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (ai - ai_old, aj - aj_old);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k[t][i] * di + y[j] * k[t][j] * dj);
        }
    }
    if iter >= config.max_iterations {
        return Err(ClassifyError::NoConvergence(iter));
    }

    // bias from free vectors, else the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };

    let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    Ok(SvmModel {
        gamma,
        cost: c,
        support_vectors: sv.iter().map(|&t| train.x[t].clone()).collect(),
        alphas: sv.iter().map(|&t| alpha[t]).collect(),
        labels: sv.iter().map(|&t| y[t]).collect(),
        bias: -rho,
        iterations: iter,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cost: f64,
    pub gamma: f64,
    pub cv_accuracy: f64,
}

/// k-fold cross-validated accuracy over a `(C, γ)` grid. The first best
/// pair in grid order wins.
pub fn grid_search(
    train: &LabeledSet,
    costs: &[f64],
    gammas: &[f64],
    folds: usize,
    seed: u64,
) -> Result<(GridResult, Vec<GridResult>), ClassifyError> {
    if folds < 2 || folds > train.len() {
        return Err(ClassifyError::Parameter(format!("folds must be in 2..={}", train.len())));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut all = Vec::new();
    for &cost in costs {
        for &gamma in gammas {
            let config = SvmConfig { cost, gamma: Some(gamma), ..Default::default() };
            let mut correct = 0usize;
            for f in 0..folds {
                let (test_idx, train_idx): (Vec<(usize, usize)>, Vec<(usize, usize)>) =
                    order.iter().copied().enumerate().partition(|(p, _)| p % folds == f);
                let tr = train.subset(&train_idx.into_iter().map(|x| x.1).collect::<Vec<_>>());
                let te = train.subset(&test_idx.into_iter().map(|x| x.1).collect::<Vec<_>>());
                let Ok(m) = train_svm(&tr, &config) else { continue };
                correct += te.x.iter().zip(&te.y).filter(|(x, y)| m.predict_row(x) == **y).count();
            }
            all.push(GridResult { cost, gamma, cv_accuracy: correct as f64 / train.len() as f64 });
        }
    }
    let best = all
        .iter()
        .fold(None::<&GridResult>, |b, r| match b {
            Some(b) if b.cv_accuracy >= r.cv_accuracy => Some(b),
            _ => Some(r),
        })
        .cloned()
        .ok_or_else(|| ClassifyError::Parameter("empty grid".into()))?;
    Ok((best, all))
}
