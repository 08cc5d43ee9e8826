//! PCA loading analysis on standardized feature matrices.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub feature_names: Vec<String>,
    /// Non-constant input columns that entered the decomposition.
    pub kept_columns: Vec<usize>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// `n_components × n_features`; dropped columns load zero.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

/// Fits PCA on the column-standardized matrix. `n_components` is truncated
/// to the numerical rank.
pub fn pca_loadings(m: &Matrix, feature_names: &[String], n_components: usize) -> Result<Pca> {
    let (n, p) = m.shape();
    if feature_names.len() != p {
        return Err(Error::Shape(format!("{} names for {p} columns", feature_names.len())));
    }
    if n < 2 {
        return Err(Error::Invalid("PCA needs at least two rows".into()));
    }
    let means = m.column_means();
    let stds = m.column_stds(&means);
    let kept: Vec<usize> = (0..p).filter(|&j| stds[j] > 1e-12 * (1.0 + means[j].abs())).collect();
    let q = kept.len();

    let z = DMatrix::from_fn(n, q, |i, k| (m[(i, kept[k])] - means[kept[k]]) / stds[kept[k]]);
    let cov = (z.transpose() * &z) / (n as f64 - 1.0);
    let total: f64 = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = order.first().map_or(0.0, |&i| eig.eigenvalues[i]);
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > top * 1e-12 * q as f64).count();
    let k = n_components.min(rank);

    let mut components = Matrix::zeros(k, p);
    let mut explained_variance = Vec::with_capacity(k);
    for (c, &i) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(i);
        // largest-magnitude loading positive, for a stable sign
        let pivot = (0..q).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (kk, &j) in kept.iter().enumerate() {
            components[(c, j)] = sign * v[kk];
        }
        explained_variance.push(eig.eigenvalues[i].max(0.0));
    }
    let explained_variance_ratio = explained_variance.iter().map(|v| v / total).collect();
    let scales = stds.iter().map(|&s| if s > 0.0 { s } else { 1.0 }).collect();
    Ok(Pca {
        feature_names: feature_names.to_vec(),
        kept_columns: kept,
        means,
        scales,
        components,
        explained_variance,
        explained_variance_ratio,
    })
}

impl Pca {
    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    pub fn transform(&self, m: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(m.rows(), m.cols());
        for i in 0..m.rows() {
            for &j in &self.kept_columns {
                z[(i, j)] = (m[(i, j)] - self.means[j]) / self.scales[j];
            }
        }
        z.matmul(&self.components.transpose()).expect("component width matches input")
    }

    pub fn inverse_transform(&self, scores: &Matrix) -> Matrix {
        let mut x = scores.matmul(&self.components).expect("score width matches components");
        let p = x.cols();
        for i in 0..x.rows() {
            for j in 0..p {
                x[(i, j)] = x[(i, j)] * self.scales[j] + self.means[j];
            }
        }
        x
    }

    /// One row per feature with its loading on each component, followed by
    /// an `explained_variance_ratio` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e| Error::Csv { path: "pca_loadings.csv".into(), source: e };
        let mut header = vec!["feature".to_string()];
        header.extend((1..=self.n_components()).map(|c| format!("PC{c}")));
        w.write_record(&header).map_err(err)?;
        for (j, name) in self.feature_names.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend((0..self.n_components()).map(|c| format!("{:.6}", self.components[(c, j)])));
            w.write_record(&row).map_err(err)?;
        }
        let mut row = vec!["explained_variance_ratio".to_string()];
        row.extend(self.explained_variance_ratio.iter().map(|r| format!("{r:.6}")));
        w.write_record(&row).map_err(err)?;
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("f{j}")).collect()
    }

    #[test]
    fn data_on_the_x_axis() {
        let m = Matrix::from_rows(&[vec![-2.0, 0.0], vec![1.0, 0.0], vec![3.0, 0.0], vec![0.5, 0.0]]).unwrap();
        let p = pca_loadings(&m, &names(2), 2).unwrap();
        assert_eq!(p.n_components(), 1);
        assert!((p.components[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert_eq!(p.components[(0, 1)], 0.0);
        assert!((p.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..100).map(|_| (0..10).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let p = pca_loadings(&m, &names(10), 10).unwrap();
        assert_eq!(p.n_components(), 10);
        let back = p.inverse_transform(&p.transform(&m));
        assert!(back.max_abs_diff(&m) < 1e-8);
        let g = p.components.matmul(&p.components.transpose()).unwrap();
        for a in 0..10 {
            for b in 0..10 {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((g[(a, b)] - expect).abs() < 1e-8);
            }
        }
        let r = &p.explained_variance_ratio;
        assert!(r.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.iter().sum::<f64>() <= 1.0 + 1e-12);
    }

    #[test]
    fn components_truncate_to_rank() {
        // third column duplicates the first
        let m = Matrix::from_rows(&[vec![1., 2., 1.], vec![2., 1., 2.], vec![3., 5., 3.], vec![0., 1., 0.]]).unwrap();
        let p = pca_loadings(&m, &names(3), 3).unwrap();
        assert_eq!(p.n_components(), 2);
    }
}
