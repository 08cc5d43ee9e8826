//! Gaussian naive Bayes.

use serde::{Deserialize, Serialize};
use studentgraph_core::logit::sigmoid;
use studentgraph_core::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
    pub log_priors: [f64; 2],
    /// Added to every per-class variance: var_smoothing × largest feature variance.
    pub epsilon: f64,
}

impl GaussianNb {
    pub fn fit(x: &Matrix, y: &[u8], var_smoothing: f64) -> Self {
        let all_means = x.column_means();
        let max_var = x
            .column_stds(&all_means)
            .iter()
            .map(|s| s * s)
            .fold(0.0_f64, f64::max);
        let epsilon = var_smoothing * max_var;
        let n = x.rows() as f64;
        let mut means: [Vec<f64>; 2] = Default::default();
        let mut variances: [Vec<f64>; 2] = Default::default();
        let mut log_priors = [0.0; 2];
        for class in 0..2u8 {
            let idx: Vec<usize> = (0..x.rows()).filter(|&i| y[i] == class).collect();
            let sub = x.select_rows(&idx);
            let m = sub.column_means();
            let v = sub.column_stds(&m).into_iter().map(|s| s * s + epsilon).collect();
            means[class as usize] = m;
            variances[class as usize] = v;
            log_priors[class as usize] = (idx.len() as f64 / n).ln();
        }
        Self { means, variances, log_priors, epsilon }
    }

    fn joint_log_likelihood(&self, class: usize, row: &[f64]) -> f64 {
        let mut ll = self.log_priors[class];
        for ((x, m), v) in row.iter().zip(&self.means[class]).zip(&self.variances[class]) {
            ll -= 0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x - m) * (x - m) / v);
        }
        ll
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows()
            .map(|r| sigmoid(self.joint_log_likelihood(1, r) - self.joint_log_likelihood(0, r)))
            .collect()
    }
}
