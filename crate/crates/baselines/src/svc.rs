//! RBF-kernel support vector classifier trained by SMO.
//!
//! Working-set selection uses second-order information (Fan, Chen & Lin
//! 2005), the same rule as libsvm, without shrinking. Kernel rows are kept
//! in a FIFO cache bounded in megabytes.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use studentgraph_core::{par, Matrix};

use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvcOptions {
    pub c: f64,
    /// `None` selects 1 / (n_features · variance of all entries).
    pub gamma: Option<f64>,
    pub tol: f64,
    pub cache_mb: usize,
    pub max_iter: Option<usize>,
}

impl Default for SvcOptions {
    fn default() -> Self {
        Self { c: 1.0, gamma: None, tol: 1e-3, cache_mb: 200, max_iter: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svc {
    pub support: Matrix,
    /// α_i·y_i per support vector.
    pub dual_coef: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn scale_gamma(x: &Matrix) -> f64 {
    let data = x.as_slice();
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (x.cols() as f64 * var)
    } else {
        1.0
    }
}

struct KernelRows<'a> {
    x: &'a Matrix,
    sq_norms: Vec<f64>,
    y: &'a [f64],
    gamma: f64,
    rows: Vec<Option<Arc<Vec<f64>>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a Matrix, y: &'a [f64], gamma: f64, cache_mb: usize) -> Self {
        let n = x.rows();
        let sq_norms = x.iter_rows().map(|r| r.iter().map(|v| v * v).sum()).collect();
        let capacity = ((cache_mb << 20) / (8 * n.max(1))).max(2);
        Self { x, sq_norms, y, gamma, rows: vec![None; n], order: VecDeque::new(), capacity }
    }

    fn kernel(&self, i: usize, j: usize) -> f64 {
        let dot: f64 = self.x.row(i).iter().zip(self.x.row(j)).map(|(a, b)| a * b).sum();
        let d2 = (self.sq_norms[i] + self.sq_norms[j] - 2.0 * dot).max(0.0);
        (-self.gamma * d2).exp()
    }

    /// Row i of Q, where Q_ij = y_i·y_j·K(x_i, x_j).
    fn q_row(&mut self, i: usize) -> Arc<Vec<f64>> {
        if let Some(r) = &self.rows[i] {
            return Arc::clone(r);
        }
        let yi = self.y[i];
        let row = Arc::new(par::map_range(self.x.rows(), |j| yi * self.y[j] * self.kernel(i, j)));
        if self.order.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.rows[old] = None;
            }
        }
        self.order.push_back(i);
        self.rows[i] = Some(Arc::clone(&row));
        row
    }
}

impl Svc {
    pub fn fit(x: &Matrix, labels: &[u8], opts: &SvcOptions) -> Result<Self> {
        let n = x.rows();
        if !(opts.c > 0.0) {
            return Err(Error::Hyperparameter(format!("SVC C must be positive, got {}", opts.c)));
        }
        let gamma = opts.gamma.unwrap_or_else(|| scale_gamma(x));
        let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let c = opts.c;
        let mut q = KernelRows::new(x, &y, gamma, opts.cache_mb);
        // Q_ii = 1 for the RBF kernel
        let qd = 1.0;
        let mut alpha = vec![0.0; n];
        let mut grad = vec![-1.0; n];
        let max_iter = opts.max_iter.unwrap_or_else(|| (100 * n).max(10_000_000));
        let mut iter = 0;
        let mut converged = false;
        while iter < max_iter {
            // i: maximal violating index in I_up
            let mut gmax = f64::NEG_INFINITY;
            let mut i_sel = None;
            for t in 0..n {
                let v = if y[t] > 0.0 {
                    (alpha[t] < c).then(|| -grad[t])
                } else {
                    (alpha[t] > 0.0).then_some(grad[t])
                };
                if let Some(v) = v {
                    if v >= gmax {
                        gmax = v;
                        i_sel = Some(t);
                    }
                }
            }
            let Some(i) = i_sel else {
                converged = true;
                break;
            };
            let qi = q.q_row(i);
            let mut gmax2 = f64::NEG_INFINITY;
            let mut j_sel = None;
            let mut obj_min = f64::INFINITY;
            for t in 0..n {
                let (grad_diff, quad) = if y[t] > 0.0 {
                    if alpha[t] <= 0.0 {
                        continue;
                    }
                    gmax2 = gmax2.max(grad[t]);
                    (gmax + grad[t], qd + qd - 2.0 * y[i] * qi[t])
                } else {
                    if alpha[t] >= c {
                        continue;
                    }
                    gmax2 = gmax2.max(-grad[t]);
                    (gmax - grad[t], qd + qd + 2.0 * y[i] * qi[t])
                };
                if grad_diff > 0.0 {
                    let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = Some(t);
                    }
                }
            }
            let Some(j) = j_sel.filter(|_| gmax + gmax2 >= opts.tol) else {
                converged = true;
                break;
            };
            iter += 1;
            let qj = q.q_row(j);
            let (old_ai, old_aj) = (alpha[i], alpha[j]);
            let (mut ai, mut aj) = (old_ai, old_aj);
            if y[i] != y[j] {
                let quad = (qd + qd + 2.0 * qi[j]).max(TAU);
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
                let quad = (qd + qd - 2.0 * qi[j]).max(TAU);
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
            let (dai, daj) = (ai - old_ai, aj - old_aj);
            for t in 0..n {
                grad[t] += qi[t] * dai + qj[t] * daj;
            }
        }
        if !converged {
            log::warn!("SVC reached {max_iter} iterations without meeting tolerance {}", opts.tol);
        }
        let rho = compute_rho(&alpha, &grad, &y, c);
        let sv: Vec<usize> = (0..n).filter(|&k| alpha[k] > 0.0).collect();
        Ok(Self {
            support: x.select_rows(&sv),
            dual_coef: sv.iter().map(|&k| alpha[k] * y[k]).collect(),
            rho,
            gamma,
            iterations: iter,
            converged,
        })
    }

    pub fn decision_function(&self, x: &Matrix) -> Vec<f64> {
        let sv_norms: Vec<f64> = self.support.iter_rows().map(|r| r.iter().map(|v| v * v).sum()).collect();
        par::map_range(x.rows(), |i| {
            let row = x.row(i);
            let norm: f64 = row.iter().map(|v| v * v).sum();
            let mut f = -self.rho;
            for (k, sv) in self.support.iter_rows().enumerate() {
                let dot: f64 = row.iter().zip(sv).map(|(a, b)| a * b).sum();
                let d2 = (norm + sv_norms[k] - 2.0 * dot).max(0.0);
                f += self.dual_coef[k] * (-self.gamma * d2).exp();
            }
            f
        })
    }

    pub fn n_support(&self) -> usize {
        self.dual_coef.len()
    }
}

fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    for k in 0..alpha.len() {
        let yg = y[k] * grad[k];
        if alpha[k] >= c {
            if y[k] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[k] <= 0.0 {
            if y[k] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        0.5 * (ub + lb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_problem_closed_form() {
        // points ±1 on a line; symmetric solution has rho = 0
        let x = Matrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        let opts = SvcOptions { c: 10.0, gamma: Some(0.5), ..SvcOptions::default() };
        let svc = Svc::fit(&x, &[0, 1], &opts).unwrap();
        assert!(svc.converged);
        approx::assert_relative_eq!(svc.rho, 0.0, epsilon = 1e-9);
        // α = 1 / (1 - K(x1, x2)) for the hard-margin two-point dual
        let k12 = (-0.5f64 * 4.0).exp();
        approx::assert_relative_eq!(svc.dual_coef[1], 1.0 / (1.0 - k12), epsilon = 1e-9);
        let f = svc.decision_function(&x);
        approx::assert_relative_eq!(f[1], 1.0, epsilon = 1e-9);
        approx::assert_relative_eq!(f[0], -1.0, epsilon = 1e-9);
    }

    #[test]
    fn gamma_scale_uses_global_variance() {
        let x = Matrix::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        // entries {0, 2, 2, 0}: variance 1
        approx::assert_relative_eq!(scale_gamma(&x), 0.5);
    }

    #[test]
    fn tiny_cache_gives_same_model() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<u8> = rows.iter().map(|r| u8::from(r[0] * r[1] > 0.0)).collect();
        let a = Svc::fit(&x, &y, &SvcOptions::default()).unwrap();
        let b = Svc::fit(&x, &y, &SvcOptions { cache_mb: 0, ..SvcOptions::default() }).unwrap();
        assert_eq!(a, b);
    }
}
