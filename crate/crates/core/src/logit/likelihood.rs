//! Simulated log-likelihood of the binary random-parameters logit and its
//! analytic gradient.

use statrs::distribution::{ContinuousCDF, Normal};

use super::halton::{halton, primes};
use super::{ChoiceDataset, LogitError, LogitSpec};
use crate::exec::Exec;

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln σ(v)`.
pub fn ln_logit_prob(v: f64) -> f64 {
    -softplus(-v)
}

/// Design matrix and simulation draws arranged for one spec.
#[derive(Debug, Clone)]
pub struct Problem {
    pub n: usize,
    pub include_constant: bool,
    /// Row-major, `n x n_fixed`.
    fixed: Vec<f64>,
    /// Row-major, `n x n_random`.
    random: Vec<f64>,
    pub n_fixed: usize,
    pub n_random: usize,
    /// Draws per observation actually simulated (1 without random terms).
    pub draws: usize,
    /// Standard-normal draws, index `(i * draws + r) * n_random + k`.
    z: Vec<f64>,
    y: Vec<u8>,
}

impl Problem {
    pub fn new(data: &ChoiceDataset, spec: &LogitSpec) -> Result<Self, LogitError> {
        spec.validate()?;
        let cols = |names: &[String]| -> Result<Vec<usize>, LogitError> {
            names
                .iter()
                .map(|f| data.column_index(f).ok_or_else(|| LogitError::UnknownFeature(f.clone())))
                .collect()
        };
        let fixed_idx = cols(&spec.fixed_features)?;
        let random_idx = cols(&spec.random_features)?;
        let n = data.len();
        let gather = |idx: &[usize]| -> Vec<f64> {
            data.x.iter().flat_map(|row| idx.iter().map(move |&c| row[c])).collect()
        };
        let n_random = random_idx.len();
        let draws = if n_random == 0 { 1 } else { spec.draws };
        let mut z = vec![0.0; n * draws * n_random];
        let normal = Normal::standard();
        for (k, p) in primes(n_random).into_iter().enumerate() {
            for (s, u) in halton(p, n * draws, spec.burn_in)?.into_iter().enumerate() {
                z[s * n_random + k] = normal.inverse_cdf(u);
            }
        }
        Ok(Problem {
            n,
            include_constant: spec.include_constant,
            fixed: gather(&fixed_idx),
            random: gather(&random_idx),
            n_fixed: fixed_idx.len(),
            n_random,
            draws,
            z,
            y: data.y.clone(),
        })
    }

    pub fn n_params(&self) -> usize {
        usize::from(self.include_constant) + self.n_fixed + 2 * self.n_random
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let c = usize::from(self.include_constant);
        (c, c + self.n_fixed, c + self.n_fixed + self.n_random)
    }

    pub fn y(&self, i: usize) -> u8 {
        self.y[i]
    }

    pub fn fixed_row(&self, i: usize) -> &[f64] {
        &self.fixed[i * self.n_fixed..(i + 1) * self.n_fixed]
    }

    pub fn random_row(&self, i: usize) -> &[f64] {
        &self.random[i * self.n_random..(i + 1) * self.n_random]
    }

    pub fn draw(&self, i: usize, r: usize) -> &[f64] {
        let s = (i * self.draws + r) * self.n_random;
        &self.z[s..s + self.n_random]
    }

    /// Systematic part shared by every draw of observation `i`.
    pub fn base_index(&self, theta: &[f64], i: usize) -> f64 {
        let (f0, _, _) = self.offsets();
        let c = if self.include_constant { theta[0] } else { 0.0 };
        self.fixed_row(i)
            .iter()
            .zip(&theta[f0..f0 + self.n_fixed])
            .fold(c, |v, (x, b)| v + x * b)
    }

    /// Random coefficients of draw `r` for observation `i`.
    pub fn coefficients(&self, theta: &[f64], i: usize, r: usize, out: &mut [f64]) {
        let (_, m0, s0) = self.offsets();
        for (k, z) in self.draw(i, r).iter().enumerate() {
            out[k] = theta[m0 + k] + theta[s0 + k] * z;
        }
    }

    /// Linear index of observation `i` at draw `r`.
    pub fn index(&self, theta: &[f64], i: usize, r: usize, base: f64, beta: &mut [f64]) -> f64 {
        self.coefficients(theta, i, r, beta);
        self.random_row(i).iter().zip(beta.iter()).fold(base, |v, (x, b)| v + x * b)
    }

    /// Log simulated probability of observation `i`, optionally accumulating
    /// its gradient into `grad`.
    fn observation(&self, theta: &[f64], i: usize, grad: Option<&mut [f64]>) -> f64 {
        let r_n = self.draws;
        let sign = if self.y[i] == 1 { 1.0 } else { -1.0 };
        let base = self.base_index(theta, i);
        let mut beta = vec![0.0; self.n_random];
        let mut lnp = Vec::with_capacity(r_n);
        let mut resid = Vec::with_capacity(r_n);
        for r in 0..r_n {
            let v = self.index(theta, i, r, base, &mut beta);
            lnp.push(ln_logit_prob(sign * v));
            // d ln P / dV = y - σ(V)
            resid.push(sign * sigma(-sign * v));
        }
        let max = lnp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = lnp.iter().map(|l| (l - max).exp()).sum();
        let ln_mean = max + sum.ln() - (r_n as f64).ln();
        if let Some(g) = grad {
            let (f0, m0, s0) = self.offsets();
            let x_f = self.fixed_row(i);
            let x_r = self.random_row(i);
            for r in 0..r_n {
                let w = (lnp[r] - ln_mean).exp() / r_n as f64 * resid[r];
                if self.include_constant {
                    g[0] += w;
                }
                for (k, x) in x_f.iter().enumerate() {
                    g[f0 + k] += w * x;
                }
                for (k, (x, z)) in x_r.iter().zip(self.draw(i, r)).enumerate() {
                    g[m0 + k] += w * x;
                    g[s0 + k] += w * x * z;
                }
            }
        }
        ln_mean
    }

    fn check(&self, theta: &[f64]) -> Result<(), LogitError> {
        if theta.len() != self.n_params() {
            return Err(LogitError::Parameter(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                theta.len()
            )));
        }
        Ok(())
    }

    pub fn loglik(&self, theta: &[f64], exec: Exec) -> Result<f64, LogitError> {
        self.check(theta)?;
        let parts = exec.map_range(self.n, |i| self.observation(theta, i, None));
        sum_checked(&parts)
    }

    pub fn loglik_grad(&self, theta: &[f64], exec: Exec) -> Result<(f64, Vec<f64>), LogitError> {
        self.check(theta)?;
        let p = self.n_params();
        let parts = exec.map_range(self.n, |i| {
            let mut g = vec![0.0; p];
            let l = self.observation(theta, i, Some(&mut g));
            (l, g)
        });
        let ll: Vec<f64> = parts.iter().map(|x| x.0).collect();
        let total = sum_checked(&ll)?;
        let mut grad = vec![0.0; p];
        for (_, g) in &parts {
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        Ok((total, grad))
    }
}

/// `σ(v)` without overflow.
pub fn sigma(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn sum_checked(parts: &[f64]) -> Result<f64, LogitError> {
    let mut total = 0.0;
    for (row, l) in parts.iter().enumerate() {
        if !l.is_finite() {
            return Err(LogitError::NonFinite { row });
        }
        total += l;
    }
    Ok(total)
}
