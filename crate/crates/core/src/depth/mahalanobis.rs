use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Mean and (regularized) precision of a reference distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBank {
    mean: Array1<f64>,
    precision: Arc<Array2<f64>>,
    shrinkage: f64,
}

impl GaussianBank {
    /// Assembles a bank from stored statistics. The precision may be shared
    /// between banks (tied covariance).
    pub fn from_parts(mean: Array1<f64>, precision: Arc<Array2<f64>>, shrinkage: f64) -> Result<Self> {
        let m = mean.len();
        if precision.dim() != (m, m) {
            return Err(Error::DimensionMismatch {
                what: "precision matrix",
                expected: m,
                found: precision.nrows(),
            });
        }
        if let Some(index) = mean.iter().chain(precision.iter()).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "gaussian bank",
                index,
            });
        }
        Ok(GaussianBank {
            mean,
            precision,
            shrinkage,
        })
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &Arc<Array2<f64>> {
        &self.precision
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(x - mean)ᵀ precision (x - mean)`, clamped at zero.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        let m = self.dim();
        if x.len() != m {
            return Err(Error::DimensionMismatch {
                what: "query dimension",
                expected: m,
                found: x.len(),
            });
        }
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let mut q = 0.0;
        for (i, row) in self.precision.outer_iter().enumerate() {
            let pv: f64 = row.iter().zip(&diff).map(|(p, v)| p * v).sum();
            q += diff[i] * pv;
        }
        Ok(q.max(0.0))
    }
}

/// Population covariance (`1/n` normalization) of the rows of `x` around `mean`.
pub fn covariance(x: &Array2<f64>, mean: &Array1<f64>) -> Array2<f64> {
    let centered = x - &mean.view().insert_axis(Axis(0));
    centered.t().dot(&centered) / x.nrows() as f64
}

/// Inverts `cov + shrinkage · (trace/m) · I` through a Cholesky factorization.
///
/// With a zero trace the ridge is `shrinkage · I`.
pub fn precision_from_covariance(cov: &Array2<f64>, shrinkage: f64) -> Result<Array2<f64>> {
    let m = cov.nrows();
    if cov.dim() != (m, m) || m == 0 {
        return Err(Error::invalid("covariance", "must be a non-empty square matrix"));
    }
    let trace: f64 = cov.diag().sum();
    let ridge = if trace > 0.0 {
        shrinkage * trace / m as f64
    } else {
        shrinkage
    };
    let mut reg = DMatrix::from_fn(m, m, |i, j| cov[[i, j]]);
    for i in 0..m {
        reg[(i, i)] += ridge;
    }
    let chol = reg.cholesky().ok_or(Error::Factorization { shrinkage })?;
    let inv = chol.inverse();
    let precision = Array2::from_shape_fn((m, m), |(i, j)| 0.5 * (inv[(i, j)] + inv[(j, i)]));
    if precision.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization { shrinkage });
    }
    Ok(precision)
}

/// Fits mean and regularized precision to the rows of `x` (`n >= 2`).
pub fn fit_gaussian_bank(x: &Array2<f64>, shrinkage: f64) -> Result<GaussianBank> {
    if x.nrows() < 2 {
        return Err(Error::invalid(
            "gaussian fit",
            format!("need at least 2 samples, got {}", x.nrows()),
        ));
    }
    if !(shrinkage >= 0.0 && shrinkage.is_finite()) {
        return Err(Error::invalid("shrinkage", format!("{shrinkage} is not a non-negative finite number")));
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let cov = covariance(x, &mean);
    let precision = precision_from_covariance(&cov, shrinkage)?;
    GaussianBank::from_parts(mean, Arc::new(precision), shrinkage)
}

/// `1 / (1 + q)` with `q` the squared Mahalanobis distance to the bank mean.
pub fn mahalanobis_depth(x: &[f64], bank: &GaussianBank) -> Result<f64> {
    Ok(1.0 / (1.0 + bank.quadratic_form(x)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_bank(mean: Array1<f64>) -> GaussianBank {
        let m = mean.len();
        GaussianBank::from_parts(mean, Arc::new(Array2::eye(m)), 0.0).unwrap()
    }

    #[test]
    fn unit_cross_has_identity_covariance() {
        let x = array![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]];
        let bank = fit_gaussian_bank(&x, 0.0).unwrap();
        assert_eq!(bank.mean(), &array![1.0, 1.0]);
        assert_eq!(covariance(&x, bank.mean()), Array2::<f64>::eye(2));
        assert_eq!(**bank.precision(), Array2::<f64>::eye(2));
    }

    #[test]
    fn constant_column_needs_shrinkage() {
        let x = array![[1.0, 5.0], [2.0, 5.0], [4.0, 5.0]];
        assert!(matches!(fit_gaussian_bank(&x, 0.0), Err(Error::Factorization { .. })));
        let bank = fit_gaussian_bank(&x, 1e-6).unwrap();
        assert!(bank.precision().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn all_identical_rows_use_absolute_ridge() {
        let x = array![[3.0, 3.0], [3.0, 3.0]];
        let bank = fit_gaussian_bank(&x, 0.25).unwrap();
        assert_eq!(**bank.precision(), Array2::<f64>::eye(2) * 4.0);
    }

    #[test]
    fn precision_inverts_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mix = Array2::from_shape_fn((8, 8), |(i, j)| if i == j { 2.0 } else { rng.random_range(-0.5..0.5) });
        let z = Array2::from_shape_fn((500, 8), |_| rng.random_range(-1.0..1.0));
        let x = z.dot(&mix);
        let bank = fit_gaussian_bank(&x, 0.0).unwrap();
        let prod = bank.precision().dot(&covariance(&x, bank.mean()));
        let err = (&prod - &Array2::<f64>::eye(8)).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(err < 1e-8, "{err}");
        let p = bank.precision();
        assert!(p.iter().zip(p.t().iter()).all(|(a, b)| a == b));
    }

    #[test]
    fn closed_form_depths() {
        let bank = identity_bank(array![1.0, -2.0, 0.5]);
        assert_eq!(mahalanobis_depth(&[1.0, -2.0, 0.5], &bank).unwrap(), 1.0);
        assert_eq!(mahalanobis_depth(&[1.0, -1.0, 0.5], &bank).unwrap(), 0.5);
        assert_eq!(mahalanobis_depth(&[1.0, -2.0, 3.5], &bank).unwrap(), 0.1);
    }

    #[test]
    fn too_few_samples() {
        assert!(fit_gaussian_bank(&array![[1.0, 2.0]], 0.1).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let bank = identity_bank(array![0.0, 0.0]);
        assert!(mahalanobis_depth(&[0.0], &bank).is_err());
    }
}
