//! L2-regularized binary logistic regression solved with damped Newton steps.
//!
//! Minimizes `0.5·‖w‖² + C·Σ logloss(y, w₀ + x·w)` with the intercept left
//! unpenalized. Shared by the pass-model fit and the LR baseline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticFit {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coef).map(|(x, w)| x * w).sum::<f64>()
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        sigmoid(self.decision(row))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    /// Inverse regularization strength.
    pub c: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self { c: 1.0, max_iter: 1000, tol: 1e-10 }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else if z < -30.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

const CHUNK: usize = 2048;

pub fn fit_logistic(x: &Matrix, y: &[u8], opts: LogisticOptions) -> Result<LogisticFit> {
    let (n, d) = x.shape();
    if n != y.len() {
        return Err(Error::Shape(format!("{n} rows but {} labels", y.len())));
    }
    if n == 0 {
        return Err(Error::Invalid("empty training set".into()));
    }
    if !(opts.c > 0.0) {
        return Err(Error::Invalid(format!("C must be positive, got {}", opts.c)));
    }
    let p = d + 1;
    // parameter layout: [intercept, w_1..w_d]
    let mut theta = DVector::<f64>::zeros(p);
    let n_chunks = n.div_ceil(CHUNK);

    let objective = |theta: &DVector<f64>| -> f64 {
        let parts = par::map_range(n_chunks, |c| {
            let mut s = 0.0;
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let z = margin(theta, x.row(i));
                s += if y[i] == 1 { softplus(-z) } else { softplus(z) };
            }
            s
        });
        let reg: f64 = theta.iter().skip(1).map(|w| w * w).sum();
        0.5 * reg + opts.c * parts.iter().sum::<f64>()
    };

    let mut f = objective(&theta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let parts = par::map_range(n_chunks, |c| {
            let mut g = DVector::<f64>::zeros(p);
            let mut h = DMatrix::<f64>::zeros(p, p);
            let mut xi = vec![0.0; p];
            xi[0] = 1.0;
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                xi[1..].copy_from_slice(x.row(i));
                let z = margin(&theta, x.row(i));
                let mu = sigmoid(z);
                let r = mu - f64::from(y[i]);
                let s = mu * (1.0 - mu);
                for a in 0..p {
                    g[a] += r * xi[a];
                    if xi[a] == 0.0 {
                        continue;
                    }
                    let sa = s * xi[a];
                    for b in a..p {
                        h[(a, b)] += sa * xi[b];
                    }
                }
            }
            (g, h)
        });
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for (g, h) in parts {
            grad += g;
            hess += h;
        }
        grad *= opts.c;
        hess *= opts.c;
        for a in 0..p {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        for a in 1..p {
            grad[a] += theta[a];
            hess[(a, a)] += 1.0;
        }
        let step = solve_spd(hess, &grad)?;
        let decrement = grad.dot(&step);
        if decrement.abs() * 0.5 <= opts.tol * (1.0 + f.abs()) {
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand = &theta - &step * t;
            let fc = objective(&cand);
            if fc <= f - 1e-4 * t * decrement {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no descent possible at machine precision
            converged = true;
            break;
        }
    }
    Ok(LogisticFit {
        intercept: theta[0],
        coef: theta.iter().skip(1).copied().collect(),
        iterations,
        converged,
    })
}

#[inline]
fn margin(theta: &DVector<f64>, row: &[f64]) -> f64 {
    theta[0] + row.iter().zip(theta.iter().skip(1)).map(|(x, w)| x * w).sum::<f64>()
}

fn solve_spd(mut h: DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let p = h.nrows();
    let scale = (0..p).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut ridge = 0.0;
    for _ in 0..12 {
        if let Some(ch) = h.clone().cholesky() {
            return Ok(ch.solve(g));
        }
        let next = if ridge == 0.0 { scale * 1e-12 } else { ridge * 10.0 };
        for i in 0..p {
            h[(i, i)] += next - ridge;
        }
        ridge = next;
    }
    Err(Error::Invalid("Hessian is not positive definite".into()))
}
