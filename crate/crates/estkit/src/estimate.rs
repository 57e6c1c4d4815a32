use nalgebra::{DMatrix, DVector};

use crate::linalg::{all_finite_vec, check_covariance, symmetrize};
use crate::{Error, Real, Result};

/// Mean vector and covariance matrix of a Gaussian state estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEstimate<T: Real> {
    pub mean: DVector<T>,
    pub cov: DMatrix<T>,
}

impl<T: Real> GaussianEstimate<T> {
    /// Validated constructor: dimensions agree, entries finite, covariance
    /// symmetric and PSD within `1e-9` relative.
    pub fn new(mean: DVector<T>, cov: DMatrix<T>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Dimension(format!(
                "mean has {} entries but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        if !all_finite_vec(&mean) {
            return Err(Error::NonFinite("mean"));
        }
        check_covariance(&cov, "covariance")?;
        Ok(Self { mean, cov })
    }

    /// Scalar estimate `{x, var}`.
    pub fn scalar(x: T, var: T) -> Result<Self> {
        Self::new(DVector::from_element(1, x), DMatrix::from_element(1, 1, var))
    }

    pub(crate) fn from_parts(mean: DVector<T>, cov: DMatrix<T>) -> Self {
        Self { mean, cov: symmetrize(&cov) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cov_diag(&self) -> DVector<T> {
        self.cov.diagonal()
    }
}
