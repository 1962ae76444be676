//! BFGS ascent with backtracking line search.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    pub max_iterations: usize,
    pub gradient_tol: f64,
    pub relative_tol: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            max_iterations: 500,
            gradient_tol: 1e-5,
            relative_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Gradient,
    RelativeChange,
    /// No ascent direction improved the objective.
    Stalled,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub iterations: usize,
    pub stop: StopReason,
    pub gradient_max_norm: f64,
    /// Objective after each accepted step, starting value first.
    pub values: Vec<f64>,
}

fn max_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximizes `f`, which returns value and gradient or `None` where undefined.
pub fn maximize<F>(mut x: Vec<f64>, opts: &OptimizerOptions, mut f: F) -> Result<(Vec<f64>, f64, Vec<f64>, Trace), String>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let p = x.len();
    let (mut fx, mut g) = f(&x).ok_or("objective undefined at the starting point")?;
    let identity = |scale: f64| {
        let mut h = vec![0.0; p * p];
        for i in 0..p {
            h[i * p + i] = scale;
        }
        h
    };
    // inverse of the negated Hessian
    let mut h = identity(1.0);
    let mut values = vec![fx];
    let mut stop = StopReason::IterationLimit;
    let mut it = 0;
    while it < opts.max_iterations {
        if max_norm(&g) < opts.gradient_tol {
            stop = StopReason::Gradient;
            break;
        }
        let mut accepted = None;
        for attempt in 0..2 {
            if attempt == 1 {
                h = identity(1.0);
            }
            let d: Vec<f64> = (0..p).map(|i| dot(&h[i * p..(i + 1) * p], &g)).collect();
            let slope = dot(&g, &d);
            if !(slope > 0.0) {
                continue;
            }
            let mut step = 1.0;
            for _ in 0..60 {
                let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
                if let Some((fn_, gn)) = f(&xn) {
                    if fn_.is_finite() && fn_ >= fx + 1e-4 * step * slope {
                        accepted = Some((xn, fn_, gn));
                        break;
                    }
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        let Some((xn, fn_, gn)) = accepted else {
            stop = StopReason::Stalled;
            break;
        };
        it += 1;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // gradient change of the minimized objective -f
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if it == 1 {
                h = identity(sy / dot(&y, &y));
            }
            let hy: Vec<f64> = (0..p).map(|i| dot(&h[i * p..(i + 1) * p], &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..p {
                for j in 0..p {
                    h[i * p + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        let change = (fn_ - fx).abs() / fx.abs().max(1e-300);
        x = xn;
        fx = fn_;
        g = gn;
        values.push(fx);
        if max_norm(&g) < opts.gradient_tol {
            stop = StopReason::Gradient;
            break;
        }
        if change < opts.relative_tol {
            stop = StopReason::RelativeChange;
            break;
        }
    }
    let trace = Trace {
        iterations: it,
        stop,
        gradient_max_norm: max_norm(&g),
        values,
    };
    Ok((x, fx, g, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concave_quadratic() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0] - 1.0, x[1] + 2.0);
            Some((-(a * a) - 10.0 * b * b - a * b, vec![-2.0 * a - b, -20.0 * b - a]))
        };
        let (x, _, _, t) = maximize(vec![0.0, 0.0], &OptimizerOptions::default(), f).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] + 2.0).abs() < 1e-5, "{x:?}");
        assert!(t.values.windows(2).all(|w| w[1] >= w[0]));
    }
}
