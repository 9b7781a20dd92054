use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// One component per row, unit length.
    pub components: Array2<f64>,
    /// Variance along each component, non-increasing.
    pub explained_variance: Vec<f64>,
}

impl Pca {
    pub fn transform(&self, data: &Array2<f64>) -> Array2<f64> {
        let k = self.components.nrows();
        Array2::from_shape_fn((data.nrows(), k), |(i, c)| {
            (0..data.ncols())
                .map(|j| (data[(i, j)] - self.mean[j]) * self.components[(c, j)])
                .sum()
        })
    }
}

/// Principal components of the rows of `data` (sample covariance, `M − 1` divisor).
/// Each component's largest-magnitude entry is positive.
pub fn pca_fit(data: &Array2<f64>, out_dims: usize) -> Result<Pca> {
    let (m, d) = data.dim();
    if out_dims == 0 || out_dims > d {
        return Err(Error::Argument(format!("cannot keep {out_dims} of {d} dimensions")));
    }
    if m <= out_dims {
        return Err(Error::Degenerate(format!("{m} samples for {out_dims} components")));
    }
    let mean: Vec<f64> = (0..d).map(|j| data.column(j).sum() / m as f64).collect();
    let centered = DMatrix::from_fn(m, d, |i, j| data[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (m as f64 - 1.0);
    if cov.iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate("all samples are identical".into()));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = Array2::zeros((out_dims, d));
    let mut explained = Vec::with_capacity(out_dims);
    for (c, &k) in order.iter().take(out_dims).enumerate() {
        let v = eig.eigenvectors.column(k);
        let big = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        let sign = if big < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[(c, j)] = sign * v[j];
        }
        explained.push(eig.eigenvalues[k].max(0.0));
    }
    Ok(Pca {
        mean,
        components,
        explained_variance: explained,
    })
}

/// Projection onto the leading `out_dims` components, with the fitted model.
pub fn pca_project(data: &Array2<f64>, out_dims: usize) -> Result<(Array2<f64>, Pca)> {
    let pca = pca_fit(data, out_dims)?;
    Ok((pca.transform(data), pca))
}

/// Ordinary least squares with intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    /// Intercept first.
    pub coefficients: Vec<f64>,
}

impl LinearFit {
    pub fn fit(x: &Array2<f64>, y: &[f64]) -> Result<Self> {
        let (m, d) = x.dim();
        if m != y.len() {
            return Err(Error::shape("regression targets", m, y.len()));
        }
        if m <= d {
            return Err(Error::Degenerate(format!("{m} samples for {} coefficients", d + 1)));
        }
        let a = DMatrix::from_fn(m, d + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
        let b = DVector::from_column_slice(y);
        let sol = a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(Self {
            coefficients: sol.iter().copied().collect(),
        })
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| self.coefficients[0] + r.iter().zip(&self.coefficients[1..]).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

/// `1 − SS_res / SS_tot`; `None` when the targets have no variance.
pub fn r_squared(y: &[f64], pred: &[f64]) -> Option<f64> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return None;
    }
    let ss_res: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    Some(1.0 - ss_res / ss_tot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn collinear_points() {
        let x = ndarray::array![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let (_, p) = pca_project(&x, 2).unwrap();
        assert!((p.components[(0, 0)] - 1.0).abs() < 1e-12 && p.components[(0, 1)].abs() < 1e-12);
        assert!((p.explained_variance[0] - 1.0).abs() < 1e-12);
        assert!(p.explained_variance[1].abs() < 1e-12);
        assert!(matches!(pca_fit(&Array2::ones((5, 2)), 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn near_linear_regression() {
        let m = 200;
        let x = Array2::from_shape_fn((m, 2), |(i, j)| if j == 0 { i as f64 / m as f64 } else { 1e-6 * ((i * 7) % 13) as f64 });
        let y: Vec<f64> = (0..m).map(|i| i as f64 / m as f64 + 1e-6 * ((i * 5) % 11) as f64).collect();
        let f = LinearFit::fit(&x, &y).unwrap();
        assert!(r_squared(&y, &f.predict(&x)).unwrap() > 0.999);
        assert_eq!(r_squared(&[1.0, 1.0], &[1.0, 1.0]), None);
    }

    proptest! {
        #[test]
        fn full_rank_projection_is_orthonormal_and_preserves_variance(
            vals in proptest::collection::vec(-5.0f64..5.0, 40),
        ) {
            let x = Array2::from_shape_vec((20, 2), vals).unwrap();
            let (proj, p) = match pca_project(&x, 2) {
                Ok(r) => r,
                Err(_) => return Ok(()),
            };
            let c = &p.components;
            let gram = c.dot(&c.t());
            for i in 0..2 {
                for j in 0..2 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((gram[(i, j)] - want).abs() < 1e-10);
                }
            }
            prop_assert!(p.explained_variance[0] >= p.explained_variance[1]);
            let var = |a: &Array2<f64>| -> f64 {
                (0..2).map(|j| {
                    let col = a.column(j);
                    let m = col.mean().unwrap();
                    col.iter().map(|v| (v - m).powi(2)).sum::<f64>()
                }).sum()
            };
            prop_assert!((var(&proj) - var(&x)).abs() < 1e-10 * var(&x).max(1.0));
        }
    }
}
