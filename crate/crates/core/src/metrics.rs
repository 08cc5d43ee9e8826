use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Per-class F1 averaged with class-support weights.
    pub f1_weighted: f64,
}

pub fn compute_metrics(y_true: &[u8], y_pred: &[u8]) -> Result<Metrics> {
    if y_true.is_empty() {
        return Err(Error::Invalid("metrics of an empty prediction set".into()));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!("{} labels vs {} predictions", y_true.len(), y_pred.len())));
    }
    // confusion counts indexed [truth][prediction]
    let mut cm = [[0usize; 2]; 2];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t > 1 || p > 1 {
            return Err(Error::Invalid("labels must be 0 or 1".into()));
        }
        cm[t as usize][p as usize] += 1;
    }
    let n = y_true.len() as f64;
    let accuracy = (cm[0][0] + cm[1][1]) as f64 / n;
    let mut f1_weighted = 0.0;
    for c in 0..2 {
        let tp = cm[c][c] as f64;
        let fp = cm[1 - c][c] as f64;
        let fn_ = cm[c][1 - c] as f64;
        let support = tp + fn_;
        let denom = 2.0 * tp + fp + fn_;
        let f1 = if denom > 0.0 { 2.0 * tp / denom } else { 0.0 };
        f1_weighted += support / n * f1;
    }
    Ok(Metrics { accuracy, f1_weighted })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect() {
        let y = [0, 1, 1, 0, 1];
        let m = compute_metrics(&y, &y).unwrap();
        assert_eq!((m.accuracy, m.f1_weighted), (1.0, 1.0));
    }

    #[test]
    fn inverted_balanced() {
        let m = compute_metrics(&[0, 1, 0, 1], &[1, 0, 1, 0]).unwrap();
        assert_eq!((m.accuracy, m.f1_weighted), (0.0, 0.0));
    }

    #[test]
    fn errors() {
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[1], &[1, 0]).is_err());
    }
}
