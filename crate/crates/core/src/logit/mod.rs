//! Binary random-parameters logit estimated by simulated maximum likelihood.
//!
//! The utility of a positive outcome is `c + Σ β_f x_f + Σ (μ_k + σ_k z_k) x_k`
//! with `z_k` standard normal. The simulated probability of each observation
//! averages the logistic likelihood over Halton draws that stay fixed per
//! observation index, so repeated evaluations see the same draws.

mod halton;
mod likelihood;
mod optimize;
mod simulate;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::exec::Exec;
use crate::utility::{FeatureRow, MODEL_FEATURES};

pub use halton::{halton, primes, radical_inverse};
pub use likelihood::{ln_logit_prob, sigma, Problem};
pub use optimize::{maximize, OptimizerOptions, StopReason, Trace};
pub use simulate::{PlantedFeature, PlantedModel};

#[derive(Debug, Error)]
pub enum LogitError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("degenerate outcome: all {n} observations have y = {value}")]
    Degenerate { n: usize, value: u8 },
    #[error("non-finite likelihood at row {row}")]
    NonFinite { row: usize },
    #[error("no convergence after {} iterations (gradient max-norm {})", .0.iterations, .0.gradient_max_norm)]
    NonConvergence(Box<Trace>),
    #[error("optimizer: {0}")]
    Optimizer(String),
}

/// Binary outcomes with named real features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDataset {
    pub names: Vec<String>,
    pub y: Vec<u8>,
    pub x: Vec<Vec<f64>>,
}

impl ChoiceDataset {
    pub fn new(names: Vec<String>, y: Vec<u8>, x: Vec<Vec<f64>>) -> Result<Self, LogitError> {
        if y.len() != x.len() {
            return Err(LogitError::Dataset(format!("{} outcomes but {} rows", y.len(), x.len())));
        }
        for (i, (yi, row)) in y.iter().zip(&x).enumerate() {
            if *yi > 1 {
                return Err(LogitError::Dataset(format!("row {i}: y = {yi}")));
            }
            if row.len() != names.len() {
                return Err(LogitError::Dataset(format!("row {i}: {} values for {} names", row.len(), names.len())));
            }
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(LogitError::Dataset(format!("row {i}: non-finite {}", names[k])));
            }
        }
        Ok(ChoiceDataset { names, y, x })
    }

    /// Complete rows of a feature table, model features only.
    pub fn from_feature_rows(rows: &[FeatureRow]) -> Result<Self, LogitError> {
        let (y, x) = rows
            .iter()
            .filter_map(FeatureRow::complete)
            .map(|(y, v)| (y, v.to_vec()))
            .unzip();
        Self::new(MODEL_FEATURES.iter().map(|s| s.to_string()).collect(), y, x)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.x.iter().map(|r| r[k]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogitSpec {
    pub fixed_features: Vec<String>,
    pub random_features: Vec<String>,
    pub include_constant: bool,
    pub draws: usize,
    pub burn_in: usize,
    pub optimizer: OptimizerOptions,
}

impl Default for LogitSpec {
    fn default() -> Self {
        LogitSpec {
            fixed_features: Vec::new(),
            random_features: Vec::new(),
            include_constant: true,
            draws: 200,
            burn_in: 10,
            optimizer: OptimizerOptions::default(),
        }
    }
}

impl LogitSpec {
    pub fn new<S: Into<String>>(fixed: impl IntoIterator<Item = S>, random: impl IntoIterator<Item = S>) -> Self {
        LogitSpec {
            fixed_features: fixed.into_iter().map(Into::into).collect(),
            random_features: random.into_iter().map(Into::into).collect(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), LogitError> {
        if self.draws == 0 {
            return Err(LogitError::Parameter("draws must be >= 1".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in self.fixed_features.iter().chain(&self.random_features) {
            if !seen.insert(f) {
                return Err(LogitError::Parameter(format!("feature {f:?} listed twice")));
            }
        }
        Ok(())
    }

    /// Parameter names in estimation order.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.include_constant {
            out.push("constant".to_string());
        }
        out.extend(self.fixed_features.iter().cloned());
        out.extend(self.random_features.iter().map(|f| format!("{f} (mean)")));
        out.extend(self.random_features.iter().map(|f| format!("{f} (sd)")));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Constant,
    Fixed,
    RandomMean,
    RandomSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub feature: Option<String>,
    pub kind: ParamKind,
    pub value: f64,
    /// `None` when the Hessian could not be inverted.
    pub std_error: Option<f64>,
}

impl Estimate {
    pub fn ci95(&self) -> Option<(f64, f64)> {
        let se = self.std_error?;
        Some((self.value - 1.959963984540054 * se, self.value + 1.959963984540054 * se))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitFit {
    pub spec: LogitSpec,
    pub n_obs: usize,
    pub estimates: Vec<Estimate>,
    /// Raw parameter vector; sd entries keep their sign here.
    pub theta: Vec<f64>,
    pub ll_converged: f64,
    pub ll_constant: f64,
    pub rho2: f64,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub trace: Trace,
    pub warnings: Vec<String>,
}

impl LogitFit {
    pub fn estimate(&self, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.name == name)
    }

    pub fn random_mean(&self, feature: &str) -> Option<&Estimate> {
        self.estimates
            .iter()
            .find(|e| e.kind == ParamKind::RandomMean && e.feature.as_deref() == Some(feature))
    }

    pub fn random_sd(&self, feature: &str) -> Option<&Estimate> {
        self.estimates
            .iter()
            .find(|e| e.kind == ParamKind::RandomSd && e.feature.as_deref() == Some(feature))
    }

    /// Report laid out as fixed parameters, random parameters with their
    /// positive shares, and goodness of fit.
    pub fn report_json(&self) -> serde_json::Value {
        use serde_json::json;
        let est = |e: &Estimate| json!({ "estimate": e.value, "std": e.std_error });
        let fixed: Vec<_> = self
            .estimates
            .iter()
            .filter(|e| matches!(e.kind, ParamKind::Constant | ParamKind::Fixed))
            .map(|e| json!({ "variable": e.name, "estimate": e.value, "std": e.std_error }))
            .collect();
        let random: Vec<_> = self
            .spec
            .random_features
            .iter()
            .filter_map(|f| {
                let m = self.random_mean(f)?;
                let s = self.random_sd(f)?;
                Some(json!({
                    "variable": f,
                    "mean": est(m),
                    "sd": est(s),
                    "positive_share": positive_share(m.value, s.value).ok(),
                }))
            })
            .collect();
        json!({
            "n_obs": self.n_obs,
            "draws": self.spec.draws,
            "fixed_parameters": fixed,
            "random_parameters": random,
            "ll_converged": self.ll_converged,
            "ll_constant": self.ll_constant,
            "rho2": self.rho2,
            "iterations": self.trace.iterations,
            "stop": self.trace.stop,
            "warnings": self.warnings,
        })
    }
}

/// Logistic probability `1 / (1 + e^-v)`.
pub fn logit_prob(v: f64) -> f64 {
    sigma(v)
}

pub fn simulated_loglik(params: &[f64], data: &ChoiceDataset, spec: &LogitSpec) -> Result<f64, LogitError> {
    Problem::new(data, spec)?.loglik(params, Exec::default())
}

/// Share of the population with a positive normal coefficient.
pub fn positive_share(mean: f64, sd: f64) -> Result<f64, LogitError> {
    if !(sd > 0.0) {
        return Err(LogitError::Parameter(format!("sd must be positive, got {sd}")));
    }
    Ok(Normal::standard().cdf(mean / sd))
}

pub fn rho_squared(ll_converged: f64, ll_constant: f64) -> Result<f64, LogitError> {
    if ll_constant == 0.0 {
        return Err(LogitError::Parameter("constant-only log-likelihood is zero".into()));
    }
    Ok(1.0 - ll_converged / ll_constant)
}

/// Log-likelihood of the constant-only model at its maximum.
pub fn constant_only_loglik(y: &[u8]) -> f64 {
    let n = y.len() as f64;
    let n1 = y.iter().filter(|&&v| v == 1).count() as f64;
    let n0 = n - n1;
    let p = n1 / n;
    let term = |k: f64, q: f64| if k > 0.0 { k * q.ln() } else { 0.0 };
    term(n1, p) + term(n0, 1.0 - p)
}

/// Features whose values split the outcomes with no overlap.
pub fn separating_features(data: &ChoiceDataset, features: &[String]) -> Vec<String> {
    features
        .iter()
        .filter(|f| {
            let Some(col) = data.column(f) else { return false };
            let range = |cls: u8| {
                col.iter()
                    .zip(&data.y)
                    .filter(|(_, &y)| y == cls)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| (lo.min(v), hi.max(v)))
            };
            let (lo0, hi0) = range(0);
            let (lo1, hi1) = range(1);
            hi0 < lo1 || hi1 < lo0
        })
        .cloned()
        .collect()
}

fn numerical_hessian(problem: &Problem, theta: &[f64], exec: Exec) -> Result<DMatrix<f64>, LogitError> {
    let p = theta.len();
    let mut h = DMatrix::zeros(p, p);
    for k in 0..p {
        let step = 1e-5 * theta[k].abs().max(1.0);
        let mut up = theta.to_vec();
        let mut dn = theta.to_vec();
        up[k] += step;
        dn[k] -= step;
        let (_, gu) = problem.loglik_grad(&up, exec)?;
        let (_, gd) = problem.loglik_grad(&dn, exec)?;
        for j in 0..p {
            h[(j, k)] = (gu[j] - gd[j]) / (2.0 * step);
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Newton steps on the numerical Hessian after the quasi-Newton phase, kept
/// only while they improve the likelihood. Returns the final Hessian.
fn newton_polish(
    problem: &Problem,
    mut theta: Vec<f64>,
    mut ll: f64,
    opts: &OptimizerOptions,
    exec: Exec,
) -> Result<(Vec<f64>, f64, DMatrix<f64>), LogitError> {
    let mut hess = numerical_hessian(problem, &theta, exec)?;
    for _ in 0..5 {
        let (_, g) = problem.loglik_grad(&theta, exec)?;
        if g.iter().all(|x| x.abs() < opts.gradient_tol * 1e-2) {
            break;
        }
        let Some(inv) = (-&hess).try_inverse() else { break };
        let step = inv * DMatrix::from_column_slice(g.len(), 1, &g);
        let next: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        match problem.loglik(&next, exec) {
            Ok(l) if l >= ll => {
                theta = next;
                ll = l;
                hess = numerical_hessian(problem, &theta, exec)?;
            }
            _ => break,
        }
    }
    Ok((theta, ll, hess))
}

pub fn estimate(data: &ChoiceDataset, spec: &LogitSpec) -> Result<LogitFit, LogitError> {
    estimate_with(data, spec, Exec::default())
}

pub fn estimate_with(data: &ChoiceDataset, spec: &LogitSpec, exec: Exec) -> Result<LogitFit, LogitError> {
    let n = data.len();
    let n1 = data.y.iter().filter(|&&v| v == 1).count();
    if n == 0 {
        return Err(LogitError::Dataset("no observations".into()));
    }
    if n1 == 0 || n1 == n {
        return Err(LogitError::Degenerate { n, value: u8::from(n1 == n) });
    }
    let problem = Problem::new(data, spec)?;
    let features: Vec<String> = spec.fixed_features.iter().chain(&spec.random_features).cloned().collect();
    let warnings: Vec<String> = separating_features(data, &features)
        .into_iter()
        .map(|f| format!("feature {f} perfectly separates the outcome"))
        .collect();

    let p = problem.n_params();
    let mut start = vec![0.0; p];
    for s in &mut start[p - problem.n_random..] {
        *s = 0.1;
    }
    let (theta, ll, _, trace) = maximize(start, &spec.optimizer, |x| problem.loglik_grad(x, exec).ok())
        .map_err(LogitError::Optimizer)?;
    if trace.stop == StopReason::IterationLimit {
        return Err(LogitError::NonConvergence(Box::new(trace)));
    }

    let (theta, ll, hess) = newton_polish(&problem, theta, ll, &spec.optimizer, exec)?;
    let covariance = (-hess).try_inverse().filter(|c| (0..p).all(|i| c[(i, i)] > 0.0));
    let mut warnings = warnings;
    if covariance.is_none() {
        warnings.push("Hessian not negative definite; standard errors unavailable".into());
    }

    let names = spec.parameter_names();
    let n_const = usize::from(spec.include_constant);
    let n_fixed = spec.fixed_features.len();
    let n_random = spec.random_features.len();
    let estimates = (0..p)
        .map(|k| {
            let (kind, feature) = if k < n_const {
                (ParamKind::Constant, None)
            } else if k < n_const + n_fixed {
                (ParamKind::Fixed, Some(spec.fixed_features[k - n_const].clone()))
            } else if k < n_const + n_fixed + n_random {
                (ParamKind::RandomMean, Some(spec.random_features[k - n_const - n_fixed].clone()))
            } else {
                (ParamKind::RandomSd, Some(spec.random_features[k - n_const - n_fixed - n_random].clone()))
            };
            let value = if kind == ParamKind::RandomSd { theta[k].abs() } else { theta[k] };
            Estimate {
                name: names[k].clone(),
                feature,
                kind,
                value,
                std_error: covariance.as_ref().map(|c| c[(k, k)].sqrt()),
            }
        })
        .collect();

    let ll_constant = constant_only_loglik(&data.y);
    Ok(LogitFit {
        spec: spec.clone(),
        n_obs: n,
        estimates,
        theta,
        ll_converged: ll,
        ll_constant,
        rho2: rho_squared(ll, ll_constant)?,
        covariance: covariance.map(|c| (0..p).map(|i| (0..p).map(|j| c[(i, j)]).collect()).collect()),
        trace,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEffect {
    pub feature: String,
    pub value: f64,
    /// Effect of a random parameter, averaged over its draws.
    pub random: bool,
}

/// Average over observations and simulation draws of `β p (1 - p)`.
pub fn marginal_effects(fit: &LogitFit, data: &ChoiceDataset) -> Result<Vec<MarginalEffect>, LogitError> {
    marginal_effects_with(fit, data, Exec::default())
}

pub fn marginal_effects_with(fit: &LogitFit, data: &ChoiceDataset, exec: Exec) -> Result<Vec<MarginalEffect>, LogitError> {
    let spec = &fit.spec;
    let problem = Problem::new(data, spec)?;
    let theta = &fit.theta;
    let f0 = usize::from(spec.include_constant);
    let (n_fixed, n_random) = (problem.n_fixed, problem.n_random);
    let r_n = problem.draws;
    // per observation: (Σ_r p(1-p), Σ_r β_k p(1-p) per random k)
    let parts = exec.map_range(problem.n, |i| {
        let base = problem.base_index(theta, i);
        let mut beta = vec![0.0; n_random];
        let mut w = 0.0;
        let mut wr = vec![0.0; n_random];
        for r in 0..r_n {
            let v = problem.index(theta, i, r, base, &mut beta);
            let p = sigma(v);
            let d = p * (1.0 - p);
            w += d;
            for (a, b) in wr.iter_mut().zip(&beta) {
                *a += b * d;
            }
        }
        (w, wr)
    });
    let denom = (problem.n * r_n) as f64;
    let w_total: f64 = parts.iter().map(|x| x.0).sum();
    let mut out: Vec<MarginalEffect> = (0..n_fixed)
        .map(|k| MarginalEffect {
            feature: spec.fixed_features[k].clone(),
            value: theta[f0 + k] * w_total / denom,
            random: false,
        })
        .collect();
    for k in 0..n_random {
        let total: f64 = parts.iter().map(|x| x.1[k]).sum();
        out.push(MarginalEffect {
            feature: spec.random_features[k].clone(),
            value: total / denom,
            random: true,
        });
    }
    Ok(out)
}
