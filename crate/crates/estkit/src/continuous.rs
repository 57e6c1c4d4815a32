//! Continuous-time estimators integrated with fixed-step forward Euler.
//!
//! Step sizes are the caller's responsibility: `dt` must be small against
//! the fastest mode of the system (for example `dt <= 1e-3 / |A|`).

use nalgebra::{DMatrix, DVector};

use crate::linalg::{all_finite, all_finite_vec, check_covariance, clustered_eigenvalues, lit, rank, solve_spd, symmetrize};
use crate::statespace::{observability_matrix, LinearMeasurementModel, LinearStateSpace};
use crate::{Complex, Error, Real, Result};

/// Relative radius used to pool numerically split repeated eigenvalues.
pub const EIGEN_CLUSTER_RADIUS: f64 = 1e-3;

/// Upper bound on integration steps in [`riccati_stationary`].
pub const RICCATI_MAX_STEPS: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousEstimatorState<T: Real> {
    pub x_hat: DVector<T>,
    /// Estimate covariance; only propagated by the Kalman-Bucy filter.
    pub sigma_hat: DMatrix<T>,
    pub t: T,
}

impl<T: Real> ContinuousEstimatorState<T> {
    pub fn new(x_hat: DVector<T>, sigma_hat: DMatrix<T>) -> Result<Self> {
        if sigma_hat.nrows() != x_hat.len() || sigma_hat.ncols() != x_hat.len() {
            return Err(Error::Dimension("sigma_hat must be n x n".into()));
        }
        if !all_finite_vec(&x_hat) {
            return Err(Error::NonFinite("x_hat"));
        }
        check_covariance(&sigma_hat, "sigma_hat")?;
        Ok(Self { x_hat, sigma_hat, t: T::zero() })
    }

    /// State for observers that carry no covariance; `sigma_hat` is zero.
    pub fn observer(x_hat: DVector<T>) -> Self {
        let n = x_hat.len();
        Self { x_hat, sigma_hat: DMatrix::zeros(n, n), t: T::zero() }
    }
}

/// `A S + S A^T - S H^T Sz^-1 H S + Se`.
fn riccati_rhs<T: Real>(
    a: &DMatrix<T>,
    meas: &LinearMeasurementModel<T>,
    sigma_e: &DMatrix<T>,
    s: &DMatrix<T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    // gain^T = Sz^-1 H S
    let gain_t = solve_spd(&meas.sigma_z, &(&meas.h * s), "measurement covariance")?;
    let gain = gain_t.transpose();
    let rhs = a * s + s * a.transpose() - &gain * &meas.h * s + sigma_e;
    Ok((rhs, gain))
}

fn check_dt<T: Real>(dt: T) -> Result<()> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::InvalidArgument("dt must be positive and finite".into()));
    }
    Ok(())
}

/// One Euler step of the Kalman-Bucy filter:
/// `dx/dt = A x + B u + S H^T Sz^-1 (z - H x)` and the differential Riccati
/// equation `dS/dt = A S + S A^T - S H^T Sz^-1 H S + Se`.
pub fn kalman_bucy_step<T: Real>(
    state: &ContinuousEstimatorState<T>,
    model: &LinearStateSpace<T>,
    meas: &LinearMeasurementModel<T>,
    sigma_e: &DMatrix<T>,
    u: &DVector<T>,
    z: &DVector<T>,
    dt: T,
) -> Result<ContinuousEstimatorState<T>> {
    check_dt(dt)?;
    let n = model.state_dim();
    if state.x_hat.len() != n || sigma_e.nrows() != n || meas.h.ncols() != n || z.len() != meas.h.nrows() || u.len() != model.input_dim() {
        return Err(Error::Dimension("state, model, measurement and inputs disagree".into()));
    }
    let (ds, gain) = riccati_rhs(&model.a, meas, sigma_e, &state.sigma_hat)?;
    let x = &state.x_hat;
    let dx = &model.a * x + &model.b * u + &gain * (z - &meas.h * x);
    let x_hat = x + dx * dt;
    let sigma_hat = symmetrize(&(&state.sigma_hat + ds * dt));
    if !all_finite_vec(&x_hat) || !all_finite(&sigma_hat) {
        return Err(Error::NonFinite("Kalman-Bucy step diverged; reduce dt"));
    }
    Ok(ContinuousEstimatorState { x_hat, sigma_hat, t: state.t + dt })
}

/// Stationary solution of `A S + S A^T - S H^T Sz^-1 H S + Se = 0`, found by
/// integrating the differential Riccati equation from `S = I` until
/// `|dS/dt|_F < tol * max(|S|_F, 1)`.
///
/// The step adapts to the current closed-loop scale. The returned matrix is
/// checked against the algebraic residual and the stability of
/// `A - S H^T Sz^-1 H`.
pub fn riccati_stationary<T: Real>(
    model: &LinearStateSpace<T>,
    meas: &LinearMeasurementModel<T>,
    sigma_e: &DMatrix<T>,
    tol: T,
) -> Result<DMatrix<T>> {
    let a = &model.a;
    let n = a.nrows();
    if meas.h.ncols() != n || sigma_e.nrows() != n || sigma_e.ncols() != n {
        return Err(Error::Dimension("A, H and sigma_e disagree".into()));
    }
    if !(tol > T::zero()) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    check_covariance(sigma_e, "sigma_e")?;
    if rank(&observability_matrix(a, &meas.h)?, lit(1e-8)) < n {
        return Err(Error::Unobservable);
    }
    let a_norm = a.norm();
    let mut s = DMatrix::<T>::identity(n, n);
    for _ in 0..RICCATI_MAX_STEPS {
        let (ds, gain) = riccati_rhs(a, meas, sigma_e, &s)?;
        let scale = s.norm().max(T::one());
        if ds.norm() < tol * scale {
            let closed = a - &gain * &meas.h;
            let stable = clustered_eigenvalues(&closed, lit(EIGEN_CLUSTER_RADIUS)).iter().all(|e| e.re < T::zero());
            if !stable {
                return Err(Error::NonConvergence(RICCATI_MAX_STEPS));
            }
            return Ok(s);
        }
        let speed = (a_norm + (&gain * &meas.h).norm()).max(T::one());
        let dt = lit::<T>(0.05) / speed;
        s = symmetrize(&(&s + ds * dt));
        if !all_finite(&s) {
            break;
        }
    }
    Err(Error::NonConvergence(RICCATI_MAX_STEPS))
}

/// One Euler step of the Luenberger observer `dx/dt = A x + B u + L (z - H x)`.
/// The error obeys `de/dt = (A - L H) e`.
pub fn luenberger_step<T: Real>(
    state: &ContinuousEstimatorState<T>,
    model: &LinearStateSpace<T>,
    meas: &LinearMeasurementModel<T>,
    l: &DMatrix<T>,
    u: &DVector<T>,
    z: &DVector<T>,
    dt: T,
) -> ContinuousEstimatorState<T> {
    let x = &state.x_hat;
    let dx = &model.a * x + &model.b * u + l * (z - &meas.h * x);
    ContinuousEstimatorState { x_hat: x + dx * dt, sigma_hat: state.sigma_hat.clone(), t: state.t + dt }
}

/// Full-state feedback on the estimate: the control `u = -K^T x` is computed
/// from the current estimate, then the estimator advances by
/// `dx/dt = (A - B K^T - L H) x + L z`. `K` is `n x m`, `L` is `n x p`.
pub fn integrated_control_step<T: Real>(
    state: &ContinuousEstimatorState<T>,
    model: &LinearStateSpace<T>,
    meas: &LinearMeasurementModel<T>,
    k: &DMatrix<T>,
    l: &DMatrix<T>,
    z: &DVector<T>,
    dt: T,
) -> (ContinuousEstimatorState<T>, DVector<T>) {
    let x = &state.x_hat;
    let u = -(k.transpose() * x);
    let dx = &model.a * x + &model.b * &u + l * (z - &meas.h * x);
    (
        ContinuousEstimatorState { x_hat: x + dx * dt, sigma_hat: state.sigma_hat.clone(), t: state.t + dt },
        u,
    )
}

/// Closed-loop matrix of the plant state and its estimate `[x; x_hat]`:
/// `[[A, -B K^T], [L H, A - B K^T - L H]]`.
pub fn augmented_matrix<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    k: &DMatrix<T>,
    l: &DMatrix<T>,
    h: &DMatrix<T>,
) -> DMatrix<T> {
    let n = a.nrows();
    let bk = b * k.transpose();
    let lh = l * h;
    let mut m = DMatrix::<T>::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.view_mut((0, n), (n, n)).copy_from(&(-&bk));
    m.view_mut((n, 0), (n, n)).copy_from(&lh);
    m.view_mut((n, n), (n, n)).copy_from(&(a - &bk - &lh));
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSpectrum<T: Real> {
    /// Eigenvalues of `A - B K^T`.
    pub controller: Vec<Complex<T>>,
    /// Eigenvalues of `A - L H`.
    pub observer: Vec<Complex<T>>,
    pub stable: bool,
}

/// Spectrum of the augmented loop through its factored characteristic
/// polynomial `det(sI - (A - B K^T)) det(sI - (A - L H))`.
pub fn augmented_stability<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    k: &DMatrix<T>,
    l: &DMatrix<T>,
    h: &DMatrix<T>,
) -> AugmentedSpectrum<T> {
    let radius = lit(EIGEN_CLUSTER_RADIUS);
    let controller = clustered_eigenvalues(&(a - b * k.transpose()), radius);
    let observer = clustered_eigenvalues(&(a - l * h), radius);
    let stable = controller.iter().chain(&observer).all(|e| e.re < T::zero());
    AugmentedSpectrum { controller, observer, stable }
}
