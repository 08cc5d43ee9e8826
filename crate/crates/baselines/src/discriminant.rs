//! Linear and quadratic discriminant analysis with Gaussian class models.
//!
//! Covariances that are singular (or numerically close) get a ridge
//! `ε·mean(diag)·I`; ε starts at the `ridge` hyperparameter and grows by
//! 10× until the Cholesky factor is well conditioned. The epsilon actually
//! used is logged and stored on the fitted model.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use studentgraph_core::logit::sigmoid;
use studentgraph_core::{par, Matrix};

use crate::error::{Error, Result};

const MIN_PIVOT_RATIO: f64 = 1e-10;
const MAX_RIDGE_STEPS: usize = 12;

struct ClassStats {
    count: usize,
    mean: DVector<f64>,
    /// Sum of centered outer products.
    scatter: DMatrix<f64>,
}

fn class_stats(x: &Matrix, y: &[u8], class: u8) -> ClassStats {
    let d = x.cols();
    let rows: Vec<&[f64]> = x.iter_rows().zip(y).filter(|(_, &l)| l == class).map(|(r, _)| r).collect();
    let count = rows.len();
    let mut mean = DVector::zeros(d);
    for r in &rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    mean /= count.max(1) as f64;
    let mut centered = DMatrix::zeros(count, d);
    for (i, r) in rows.iter().enumerate() {
        for j in 0..d {
            centered[(i, j)] = r[j] - mean[j];
        }
    }
    let scatter = centered.transpose() * &centered;
    ClassStats { count, mean, scatter }
}

/// Cholesky of `cov`, adding a growing ridge until every squared pivot is
/// at least `MIN_PIVOT_RATIO` times the largest diagonal entry.
fn regularized_cholesky(cov: &DMatrix<f64>, ridge: f64, what: &str) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let d = cov.nrows();
    let max_diag = (0..d).map(|i| cov[(i, i)]).fold(0.0_f64, f64::max);
    let mean_diag = ((0..d).map(|i| cov[(i, i)]).sum::<f64>() / d as f64).max(f64::MIN_POSITIVE);
    let well_conditioned = |ch: &Cholesky<f64, Dyn>, scale: f64| {
        let l = ch.l_dirty();
        (0..d).all(|i| l[(i, i)] * l[(i, i)] >= MIN_PIVOT_RATIO * scale)
    };
    if let Some(ch) = Cholesky::new(cov.clone()) {
        if max_diag > 0.0 && well_conditioned(&ch, max_diag) {
            return Ok((ch, 0.0));
        }
    }
    let mut eps = if ridge > 0.0 { ridge } else { 1e-9 };
    for _ in 0..MAX_RIDGE_STEPS {
        let mut reg = cov.clone();
        for i in 0..d {
            reg[(i, i)] += eps * mean_diag;
        }
        if let Some(ch) = Cholesky::new(reg) {
            if well_conditioned(&ch, max_diag + eps * mean_diag) {
                log::info!("{what}: singular covariance, ridge epsilon {eps:e}");
                return Ok((ch, eps));
            }
        }
        eps *= 10.0;
    }
    Err(Error::Numerical(format!("{what}: covariance could not be regularized")))
}

fn log_det(ch: &Cholesky<f64, Dyn>) -> f64 {
    let l = ch.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lda {
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub ridge_epsilon: f64,
}

impl Lda {
    pub fn fit(x: &Matrix, y: &[u8], ridge: f64) -> Result<Self> {
        let n = x.rows();
        let s0 = class_stats(x, y, 0);
        let s1 = class_stats(x, y, 1);
        let dof = (n as f64 - 2.0).max(1.0);
        let cov = (&s0.scatter + &s1.scatter) / dof;
        let (ch, eps) = regularized_cholesky(&cov, ridge, "LDA")?;
        let diff = &s1.mean - &s0.mean;
        let w = ch.solve(&diff);
        let midpoint = (&s1.mean + &s0.mean) * 0.5;
        let prior = (s1.count as f64 / s0.count as f64).ln();
        Ok(Self { intercept: prior - midpoint.dot(&w), coef: w.iter().copied().collect(), ridge_epsilon: eps })
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| sigmoid(self.decision(r))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QdaClass {
    pub mean: Vec<f64>,
    /// Lower Cholesky factor, row-major d×d.
    pub chol: Vec<f64>,
    pub log_det: f64,
    pub log_prior: f64,
}

impl QdaClass {
    fn log_density(&self, row: &[f64]) -> f64 {
        // forward substitution L z = x - μ
        let d = self.mean.len();
        let mut z = vec![0.0; d];
        let mut maha = 0.0;
        for i in 0..d {
            let mut s = row[i] - self.mean[i];
            let li = &self.chol[i * d..i * d + i];
            for (l, zj) in li.iter().zip(&z) {
                s -= l * zj;
            }
            z[i] = s / self.chol[i * d + i];
            maha += z[i] * z[i];
        }
        self.log_prior - 0.5 * (self.log_det + maha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qda {
    pub classes: [QdaClass; 2],
    pub ridge_epsilon: [f64; 2],
}

impl Qda {
    pub fn fit(x: &Matrix, y: &[u8], ridge: f64) -> Result<Self> {
        let n = x.rows() as f64;
        let mut out = Vec::with_capacity(2);
        let mut eps_used = [0.0; 2];
        for class in 0..2u8 {
            let s = class_stats(x, y, class);
            let cov = &s.scatter / (s.count as f64 - 1.0).max(1.0);
            let (ch, eps) = regularized_cholesky(&cov, ridge, &format!("QDA class {class}"))?;
            eps_used[class as usize] = eps;
            let l = ch.l();
            let d = l.nrows();
            let chol = (0..d * d).map(|k| l[(k / d, k % d)]).collect();
            out.push(QdaClass {
                mean: s.mean.iter().copied().collect(),
                chol,
                log_det: log_det(&ch),
                log_prior: (s.count as f64 / n).ln(),
            });
        }
        let c1 = out.pop().unwrap();
        let c0 = out.pop().unwrap();
        Ok(Self { classes: [c0, c1], ridge_epsilon: eps_used })
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        self.classes[1].log_density(row) - self.classes[0].log_density(row)
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        par::map_range(x.rows(), |i| sigmoid(self.decision(x.row(i))))
    }
}
