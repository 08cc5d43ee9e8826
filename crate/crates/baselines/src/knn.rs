//! Brute-force k-nearest neighbours with Euclidean distance.
//!
//! Distance ties are broken by training-row order; the class-1 score is the
//! share of positive neighbours.

use serde::{Deserialize, Serialize};
use studentgraph_core::{par, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub train: Matrix,
    pub labels: Vec<u8>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += (x - y) * (x - y);
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

impl Knn {
    pub fn fit(x: &Matrix, y: &[u8], k: usize) -> Self {
        Self { k: k.min(x.rows()).max(1), train: x.clone(), labels: y.to_vec() }
    }

    /// Indices of the k nearest training rows, closest first.
    pub fn neighbours(&self, query: &[f64]) -> Vec<usize> {
        let k = self.k;
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (j, row) in self.train.iter_rows().enumerate() {
            let d = squared_distance(query, row);
            if best.len() == k && d >= best[k - 1].0 {
                continue;
            }
            let pos = best.partition_point(|&(bd, _)| bd <= d);
            best.insert(pos, (d, j));
            best.truncate(k);
        }
        best.into_iter().map(|(_, j)| j).collect()
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        par::map_range(x.rows(), |i| {
            let nb = self.neighbours(x.row(i));
            nb.iter().filter(|&&j| self.labels[j] == 1).count() as f64 / nb.len() as f64
        })
    }
}
