//! Discrete linear Kalman filter, constant-gain filters and full-rank
//! weighted-average fusion.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{all_finite_vec, check_pd, lit, solve_spd};
use crate::statespace::{LinearMeasurementModel, LinearStateSpace};
use crate::{Error, GaussianEstimate, Real, Result};

/// Form of the posterior covariance in [`kf_update_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceForm {
    /// `(I - K H) P`, then symmetrized.
    #[default]
    Standard,
    /// `(I - K H) P (I - K H)^T + K R K^T`, better behaved when the gain is
    /// computed from an ill-conditioned innovation covariance.
    Joseph,
}

/// `x = A x + B u`, `P = A P A^T + B Su B^T (+ Se)`.
pub fn kf_predict<T: Real>(
    est: &GaussianEstimate<T>,
    model: &LinearStateSpace<T>,
    u: &DVector<T>,
) -> Result<GaussianEstimate<T>> {
    let n = model.state_dim();
    if est.dim() != n || u.len() != model.input_dim() {
        return Err(Error::Dimension(format!(
            "estimate has {} states and u {} inputs; model expects {n} and {}",
            est.dim(),
            u.len(),
            model.input_dim()
        )));
    }
    let mean = &model.a * &est.mean + &model.b * u;
    let cov = &model.a * &est.cov * model.a.transpose() + model.process_cov();
    Ok(GaussianEstimate::from_parts(mean, cov))
}

pub fn kf_update<T: Real>(
    est: &GaussianEstimate<T>,
    meas: &LinearMeasurementModel<T>,
    z: &DVector<T>,
) -> Result<GaussianEstimate<T>> {
    kf_update_with(est, meas, z, CovarianceForm::Standard)
}

/// Kalman gain `K = P H^T (H P H^T + R)^{-1}` and innovation `z - H x`.
pub fn kalman_gain<T: Real>(
    cov: &DMatrix<T>,
    h: &DMatrix<T>,
    sigma_z: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let s = h * cov * h.transpose() + sigma_z;
    // K^T = S^{-1} H P
    let kt = solve_spd(&s, &(h * cov), "innovation covariance")?;
    Ok(kt.transpose())
}

pub fn kf_update_with<T: Real>(
    est: &GaussianEstimate<T>,
    meas: &LinearMeasurementModel<T>,
    z: &DVector<T>,
    form: CovarianceForm,
) -> Result<GaussianEstimate<T>> {
    let n = est.dim();
    if meas.h.ncols() != n || z.len() != meas.meas_dim() {
        return Err(Error::Dimension("measurement does not match the state".into()));
    }
    if !all_finite_vec(z) {
        return Err(Error::NonFinite("measurement"));
    }
    let k = kalman_gain(&est.cov, &meas.h, &meas.sigma_z)?;
    let innovation = z - &meas.h * &est.mean;
    let mean = &est.mean + &k * innovation;
    let ikh = DMatrix::<T>::identity(n, n) - &k * &meas.h;
    let cov = match form {
        CovarianceForm::Standard => &ikh * &est.cov,
        CovarianceForm::Joseph => {
            &ikh * &est.cov * ikh.transpose() + &k * &meas.sigma_z * k.transpose()
        }
    };
    Ok(GaussianEstimate::from_parts(mean, cov))
}

/// Optimal weighted average of two full-dimension estimates:
/// `P^{-1} = P1^{-1} + P2^{-1}`, `x = P (P1^{-1} x1 + P2^{-1} x2)`.
///
/// Evaluated in the equivalent gain form `K = P1 (P1 + P2)^{-1}`,
/// `x = x1 + K (x2 - x1)`, `P = P1 - K P1`, which keeps simple scalar cases
/// exact.
pub fn fuse_full<T: Real>(
    e1: &GaussianEstimate<T>,
    e2: &GaussianEstimate<T>,
) -> Result<GaussianEstimate<T>> {
    if e1.dim() != e2.dim() {
        return Err(Error::Dimension("estimates differ in dimension".into()));
    }
    check_pd(&e1.cov, "first covariance")?;
    check_pd(&e2.cov, "second covariance")?;
    let sum = &e1.cov + &e2.cov;
    // sum is symmetric, so K^T = sum^{-1} P1.
    let k = sum
        .lu()
        .solve(&e1.cov)
        .ok_or(Error::Singular("summed covariance"))?
        .transpose();
    let mean = &e1.mean + &k * (&e2.mean - &e1.mean);
    let cov = &e1.cov - &k * &e1.cov;
    Ok(GaussianEstimate::from_parts(mean, cov))
}

/// Fixed gain for filters that carry no covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantGain<T: Real> {
    pub k: DMatrix<T>,
}

impl<T: Real> ConstantGain<T> {
    pub fn new(k: DMatrix<T>) -> Self {
        Self { k }
    }

    /// `K = [alpha, beta / dt]^T` for a constant-velocity state.
    pub fn alpha_beta(alpha: T, beta: T, dt: T) -> Self {
        Self { k: DMatrix::from_column_slice(2, 1, &[alpha, beta / dt]) }
    }

    /// `K = [alpha, beta / dt, gamma / (2 dt^2)]^T` for a constant-acceleration state.
    pub fn alpha_beta_gamma(alpha: T, beta: T, gamma: T, dt: T) -> Self {
        let two: T = lit(2.0);
        Self { k: DMatrix::from_column_slice(3, 1, &[alpha, beta / dt, gamma / (two * dt * dt)]) }
    }
}

/// `x + K (z - H x)`.
pub fn constant_gain_update<T: Real>(
    mean: &DVector<T>,
    gain: &ConstantGain<T>,
    h: &DMatrix<T>,
    z: &DVector<T>,
) -> Result<DVector<T>> {
    if gain.k.nrows() != mean.len() || gain.k.ncols() != z.len() || h.nrows() != z.len() || h.ncols() != mean.len() {
        return Err(Error::Dimension("gain, H and z do not fit the state".into()));
    }
    Ok(mean + &gain.k * (z - h * mean))
}
