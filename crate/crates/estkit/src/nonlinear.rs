//! Extended, unscented and cubature Kalman filters.

use nalgebra::{DMatrix, DVector};

use crate::kalman::kalman_gain;
use crate::linalg::{all_finite, all_finite_vec, lit, solve_spd, sqrt_psd, weighted_moments};
use crate::statespace::{NonlinearMeasurementModel, NonlinearSystemModel};
use crate::{Error, GaussianEstimate, Real, Result};

/// Deterministic sample set whose weighted moments match a Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPointSet<T: Real> {
    pub points: Vec<DVector<T>>,
    pub weights: Vec<T>,
}

impl<T: Real> SigmaPointSet<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Weighted mean and covariance of the points.
    pub fn moments(&self) -> (DVector<T>, DMatrix<T>) {
        weighted_moments(&self.points, &self.weights)
    }
}

/// Unscented transform settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfConfig<T: Real> {
    /// Spread parameter; `None` means `3 - n` for the dimension being sampled.
    pub kappa: Option<T>,
    /// Add `sigma_eps` after the covariance sum instead of augmenting the
    /// state with it. The propagated points then miss that noise, so the
    /// update re-samples points from the predicted estimate.
    pub additive_process_noise: bool,
}

impl<T: Real> Default for UkfConfig<T> {
    fn default() -> Self {
        Self { kappa: None, additive_process_noise: false }
    }
}

pub fn ekf_predict<T: Real>(
    est: &GaussianEstimate<T>,
    model: &NonlinearSystemModel<T>,
    u: &DVector<T>,
) -> Result<GaussianEstimate<T>> {
    let mean = (model.g)(&est.mean, u);
    if mean.len() != est.dim() {
        return Err(Error::Dimension("g changes the state dimension".into()));
    }
    if !all_finite_vec(&mean) {
        return Err(Error::NonFinite("g(x, u)"));
    }
    let gx = (model.jac_x)(&est.mean, u);
    let gu = (model.jac_u)(&est.mean, u);
    let mut cov = &gx * &est.cov * gx.transpose() + &gu * &model.sigma_u * gu.transpose();
    if let Some(e) = &model.sigma_eps {
        cov += e;
    }
    if !all_finite(&cov) {
        return Err(Error::NonFinite("predicted covariance"));
    }
    Ok(GaussianEstimate::from_parts(mean, cov))
}

pub fn ekf_update<T: Real>(
    est: &GaussianEstimate<T>,
    meas: &NonlinearMeasurementModel<T>,
    z: &DVector<T>,
) -> Result<GaussianEstimate<T>> {
    if !all_finite_vec(z) {
        return Err(Error::NonFinite("measurement"));
    }
    let hx = (meas.jac)(&est.mean);
    if hx.ncols() != est.dim() || hx.nrows() != z.len() {
        return Err(Error::Dimension("measurement Jacobian does not fit".into()));
    }
    let k = kalman_gain(&est.cov, &hx, &meas.sigma_z)?;
    let mean = &est.mean + &k * (z - (meas.h)(&est.mean));
    let n = est.dim();
    let cov = (DMatrix::<T>::identity(n, n) - &k * &hx) * &est.cov;
    Ok(GaussianEstimate::from_parts(mean, cov))
}

fn symmetric_set<T: Real>(mean: &DVector<T>, sqrt: &DMatrix<T>, spread: T, center: Option<T>, w: T) -> SigmaPointSet<T> {
    let n = mean.len();
    let scale = spread.sqrt();
    let mut points = Vec::with_capacity(2 * n + 1);
    let mut weights = Vec::with_capacity(2 * n + 1);
    if let Some(w0) = center {
        points.push(mean.clone());
        weights.push(w0);
    }
    for j in 0..n {
        points.push(mean + sqrt.column(j) * scale);
        weights.push(w);
    }
    for j in 0..n {
        points.push(mean - sqrt.column(j) * scale);
        weights.push(w);
    }
    SigmaPointSet { points, weights }
}

fn sigma_from_sqrt<T: Real>(mean: &DVector<T>, sqrt: &DMatrix<T>, kappa: T) -> Result<SigmaPointSet<T>> {
    let n: T = lit(mean.len() as f64);
    if !(n + kappa > T::zero()) {
        return Err(Error::InvalidArgument("n + kappa must be positive".into()));
    }
    let w = T::one() / (lit::<T>(2.0) * (n + kappa));
    Ok(symmetric_set(mean, sqrt, n + kappa, Some(kappa / (n + kappa)), w))
}

fn cubature_from_sqrt<T: Real>(mean: &DVector<T>, sqrt: &DMatrix<T>) -> SigmaPointSet<T> {
    let n: T = lit(mean.len() as f64);
    symmetric_set(mean, sqrt, n, None, T::one() / (n + n))
}

/// Sigma points `{x, x +- sqrt((n + kappa) P) e_j}` with weights
/// `kappa / (n + kappa)` and `1 / (2 (n + kappa))`.
pub fn ut_sigma_points<T: Real>(est: &GaussianEstimate<T>, kappa: T) -> Result<SigmaPointSet<T>> {
    sigma_from_sqrt(&est.mean, &sqrt_psd(&est.cov)?, kappa)
}

/// Cubature points `{x +- sqrt(n P) e_j}` with weights `1 / (2 n)`.
pub fn cubature_points<T: Real>(est: &GaussianEstimate<T>) -> Result<SigmaPointSet<T>> {
    Ok(cubature_from_sqrt(&est.mean, &sqrt_psd(&est.cov)?))
}

/// Points propagated through the system model together with the moments
/// they define.
#[derive(Debug, Clone)]
pub struct SigmaPrediction<T: Real> {
    pub estimate: GaussianEstimate<T>,
    pub points: SigmaPointSet<T>,
}

/// Augmented mean `[x; 0; 0]` and block-diagonal square root of
/// `blockdiag(P, Su, Se)`. The process-noise block is left out when absent
/// or handled additively.
fn augment<T: Real>(
    est: &GaussianEstimate<T>,
    sys: &NonlinearSystemModel<T>,
    with_eps: bool,
) -> Result<(DVector<T>, DMatrix<T>, usize)> {
    let n = est.dim();
    let m = sys.sigma_u.nrows();
    let eps = if with_eps { sys.sigma_eps.as_ref() } else { None };
    let e = eps.map_or(0, |e| e.nrows());
    let dim = n + m + e;
    let mut sqrt = DMatrix::<T>::zeros(dim, dim);
    sqrt.view_mut((0, 0), (n, n)).copy_from(&sqrt_psd(&est.cov)?);
    if m > 0 {
        sqrt.view_mut((n, n), (m, m)).copy_from(&sqrt_psd(&sys.sigma_u)?);
    }
    if let Some(eps) = eps {
        sqrt.view_mut((n + m, n + m), (e, e)).copy_from(&sqrt_psd(eps)?);
    }
    let mut mean = DVector::<T>::zeros(dim);
    mean.rows_mut(0, n).copy_from(&est.mean);
    Ok((mean, sqrt, m))
}

fn propagate<T: Real>(
    set: &SigmaPointSet<T>,
    sys: &NonlinearSystemModel<T>,
    u: &DVector<T>,
    n: usize,
    m: usize,
    additive_eps: bool,
) -> Result<SigmaPrediction<T>> {
    let mut points = Vec::with_capacity(set.len());
    for a in &set.points {
        let x = a.rows(0, n).into_owned();
        let du = a.rows(n, m).into_owned();
        let mut next = (sys.g)(&x, &(u + du));
        if a.len() > n + m {
            next += a.rows(n + m, n);
        }
        if next.len() != n || !all_finite_vec(&next) {
            return Err(Error::NonFinite("propagated sigma point"));
        }
        points.push(next);
    }
    let (mean, mut cov) = weighted_moments(&points, &set.weights);
    if additive_eps {
        if let Some(e) = &sys.sigma_eps {
            cov += e;
        }
    }
    Ok(SigmaPrediction {
        estimate: GaussianEstimate::from_parts(mean, cov),
        points: SigmaPointSet { points, weights: set.weights.clone() },
    })
}

/// UKF prediction, steps 1 to 4.
pub fn ukf_predict<T: Real>(
    est: &GaussianEstimate<T>,
    sys: &NonlinearSystemModel<T>,
    u: &DVector<T>,
    cfg: &UkfConfig<T>,
) -> Result<SigmaPrediction<T>> {
    let (mean, sqrt, m) = augment(est, sys, !cfg.additive_process_noise)?;
    let kappa = cfg.kappa.unwrap_or_else(|| lit::<T>(3.0) - lit(mean.len() as f64));
    let set = sigma_from_sqrt(&mean, &sqrt, kappa)?;
    propagate(&set, sys, u, est.dim(), m, cfg.additive_process_noise)
}

/// Measurement update from propagated points, steps 5 to 9.
pub fn sigma_point_update<T: Real>(
    pred: &SigmaPrediction<T>,
    meas: &NonlinearMeasurementModel<T>,
    z: &DVector<T>,
) -> Result<GaussianEstimate<T>> {
    if !all_finite_vec(z) {
        return Err(Error::NonFinite("measurement"));
    }
    let set = &pred.points;
    let zs: Vec<DVector<T>> = set.points.iter().map(|x| (meas.h)(x)).collect();
    if zs.iter().any(|zi| zi.len() != z.len()) {
        return Err(Error::Dimension("h output does not match z".into()));
    }
    let (z_hat, pzz) = weighted_moments(&zs, &set.weights);
    let s_yy = pzz + &meas.sigma_z;
    let x_bar = &pred.estimate.mean;
    let mut s_xz = DMatrix::<T>::zeros(x_bar.len(), z.len());
    for ((x, zi), &w) in set.points.iter().zip(&zs).zip(&set.weights) {
        s_xz += (x - x_bar) * (zi - &z_hat).transpose() * w;
    }
    // K = S_xz S_yy^{-1}  <=>  K^T = S_yy^{-1} S_xz^T
    let k = solve_spd(&s_yy, &s_xz.transpose(), "innovation covariance")?.transpose();
    let mean = x_bar + &k * (z - z_hat);
    let cov = &pred.estimate.cov - &k * &s_yy * k.transpose();
    Ok(GaussianEstimate::from_parts(mean, cov))
}

pub fn ukf_step<T: Real>(
    est: &GaussianEstimate<T>,
    sys: &NonlinearSystemModel<T>,
    meas: &NonlinearMeasurementModel<T>,
    u: &DVector<T>,
    z: &DVector<T>,
    cfg: &UkfConfig<T>,
) -> Result<GaussianEstimate<T>> {
    let mut pred = ukf_predict(est, sys, u, cfg)?;
    if cfg.additive_process_noise {
        let n = est.dim();
        let kappa = cfg.kappa.unwrap_or_else(|| lit::<T>(3.0) - lit(n as f64));
        pred.points = ut_sigma_points(&pred.estimate, kappa)?;
    }
    sigma_point_update(&pred, meas, z)
}

/// CKF prediction, steps 1 to 4, followed by the mandatory re-sampling of
/// cubature points from the predicted estimate (step 4b).
pub fn ckf_predict<T: Real>(
    est: &GaussianEstimate<T>,
    sys: &NonlinearSystemModel<T>,
    u: &DVector<T>,
) -> Result<SigmaPrediction<T>> {
    let (mean, sqrt, m) = augment(est, sys, true)?;
    let set = cubature_from_sqrt(&mean, &sqrt);
    let mut pred = propagate(&set, sys, u, est.dim(), m, false)?;
    pred.points = cubature_points(&pred.estimate)?;
    Ok(pred)
}

pub fn ckf_step<T: Real>(
    est: &GaussianEstimate<T>,
    sys: &NonlinearSystemModel<T>,
    meas: &NonlinearMeasurementModel<T>,
    u: &DVector<T>,
    z: &DVector<T>,
) -> Result<GaussianEstimate<T>> {
    let pred = ckf_predict(est, sys, u)?;
    sigma_point_update(&pred, meas, z)
}
