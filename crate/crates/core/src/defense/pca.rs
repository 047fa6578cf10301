use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A fitted principal-component projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// One unit-norm direction per row, by decreasing variance. The
    /// largest-magnitude entry of every direction is positive.
    pub components: Matrix,
    /// Variance along each component (sample covariance, `n - 1` divisor).
    pub explained_variance: Vec<f64>,
    /// Sum of variances over all features.
    pub total_variance: f64,
}

impl Pca {
    pub fn fit(data: &Matrix, d: usize) -> Result<Self> {
        let (n, p) = (data.rows, data.cols);
        if n < 2 {
            return Err(Error::Validation("PCA needs at least two rows".into()));
        }
        if d == 0 || d > p {
            return Err(Error::Validation(format!("cannot keep {d} components of {p} features")));
        }
        let mean: Vec<f64> = (0..p).map(|j| data.iter_rows().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let mut cov = DMatrix::<f64>::zeros(p, p);
        for r in data.iter_rows() {
            let c: Vec<f64> = r.iter().zip(&mean).map(|(x, m)| x - m).collect();
            for i in 0..p {
                for j in i..p {
                    cov[(i, j)] += c[i] * c[j];
                }
            }
        }
        for i in 0..p {
            for j in i..p {
                let v = cov[(i, j)] / (n - 1) as f64;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        let total_variance = cov.trace();
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

        let mut components = Matrix::zeros(d, p);
        let mut explained_variance = Vec::with_capacity(d);
        for (k, &idx) in order.iter().take(d).enumerate() {
            let v = eig.eigenvectors.column(idx);
            let big = (0..p).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a))).unwrap();
            let sign = if v[big] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..p {
                components.row_mut(k)[j] = sign * v[j];
            }
            explained_variance.push(eig.eigenvalues[idx].max(0.0));
        }
        Ok(Pca { mean, components, explained_variance, total_variance })
    }

    /// Centered projection onto the kept components.
    pub fn transform(&self, data: &Matrix) -> Result<Matrix> {
        if data.cols != self.mean.len() {
            return Err(Error::Shape(format!("{} features, PCA fitted on {}", data.cols, self.mean.len())));
        }
        let d = self.components.rows;
        let mut out = Matrix::zeros(data.rows, d);
        for (i, r) in data.iter_rows().enumerate() {
            for k in 0..d {
                out.row_mut(i)[k] = self.components.row(k).iter().zip(r).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum();
            }
        }
        Ok(out)
    }

    /// Map projected rows back to feature space.
    pub fn inverse_transform(&self, z: &Matrix) -> Matrix {
        let p = self.mean.len();
        let mut out = Matrix::zeros(z.rows, p);
        for i in 0..z.rows {
            let row = out.row_mut(i);
            row.copy_from_slice(&self.mean);
            for k in 0..self.components.rows {
                for (o, c) in row.iter_mut().zip(self.components.row(k)) {
                    *o += z.get(i, k) * c;
                }
            }
        }
        out
    }
}

/// Center `data` and project it onto its top `d` principal directions.
pub fn pca(data: &Matrix, d: usize) -> Result<Matrix> {
    Pca::fit(data, d)?.transform(data)
}
