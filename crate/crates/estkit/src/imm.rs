//! Interacting multiple model estimator.

use nalgebra::{DMatrix, DVector};

use crate::kalman::{kf_predict, kf_update};
use crate::linalg::{lit, log_gaussian_pdf};
use crate::nonlinear::{ekf_predict, ekf_update};
use crate::statespace::{
    LinearMeasurementModel, LinearStateSpace, NonlinearMeasurementModel, NonlinearSystemModel,
};
use crate::{Error, GaussianEstimate, Real, Result};

/// Default lower bound on a model weight after each update.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-12;

/// Smallest merged weight accepted by [`imm_mix`].
const STARVATION: f64 = 1e-300;

/// Per-model system and measurement pair. Linear pairs are filtered with
/// the Kalman filter, nonlinear pairs with the EKF.
#[derive(Debug, Clone)]
pub enum ImmModel<T: Real> {
    Linear(LinearStateSpace<T>, LinearMeasurementModel<T>),
    Nonlinear(NonlinearSystemModel<T>, NonlinearMeasurementModel<T>),
}

impl<T: Real> ImmModel<T> {
    fn predict(&self, est: &GaussianEstimate<T>, u: &DVector<T>) -> Result<GaussianEstimate<T>> {
        match self {
            ImmModel::Linear(s, _) => kf_predict(est, s, u),
            ImmModel::Nonlinear(s, _) => ekf_predict(est, s, u),
        }
    }

    fn update(&self, est: &GaussianEstimate<T>, z: &DVector<T>) -> Result<GaussianEstimate<T>> {
        match self {
            ImmModel::Linear(_, m) => kf_update(est, m, z),
            ImmModel::Nonlinear(_, m) => ekf_update(est, m, z),
        }
    }

    /// Innovation `z - h(x)` and its covariance `H P H^T + Sz` at `est`.
    fn innovation(&self, est: &GaussianEstimate<T>, z: &DVector<T>) -> (DVector<T>, DMatrix<T>) {
        match self {
            ImmModel::Linear(_, m) => (
                z - &m.h * &est.mean,
                &m.h * &est.cov * m.h.transpose() + &m.sigma_z,
            ),
            ImmModel::Nonlinear(_, m) => {
                let h = (m.jac)(&est.mean);
                (z - (m.h)(&est.mean), &h * &est.cov * h.transpose() + &m.sigma_z)
            }
        }
    }
}

/// Which estimate the likelihood of each model is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnovationForm {
    /// Innovation of the updated estimate, `z - h(x_post)` with covariance
    /// `H P_post H^T + Sz`.
    #[default]
    Posterior,
    /// The usual prior innovation `z - h(x_prior)` with `H P_prior H^T + Sz`.
    Prior,
}

#[derive(Debug, Clone)]
pub struct ImmBank<T: Real> {
    pub models: Vec<ImmModel<T>>,
    /// `transition[(i, k)]` is the probability of switching from model `i` to `k`.
    pub transition: DMatrix<T>,
    pub weights: Vec<T>,
    pub estimates: Vec<GaussianEstimate<T>>,
    pub innovation: InnovationForm,
    pub weight_floor: T,
}

impl<T: Real> ImmBank<T> {
    pub fn new(
        models: Vec<ImmModel<T>>,
        transition: DMatrix<T>,
        weights: Vec<T>,
        estimates: Vec<GaussianEstimate<T>>,
    ) -> Result<Self> {
        let bank = Self {
            models,
            transition,
            weights,
            estimates,
            innovation: InnovationForm::default(),
            weight_floor: lit(DEFAULT_WEIGHT_FLOOR),
        };
        bank.validate()?;
        Ok(bank)
    }

    pub fn with_innovation(mut self, form: InnovationForm) -> Self {
        self.innovation = form;
        self
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.models.len();
        if m == 0 {
            return Err(Error::InvalidArgument("bank needs at least one model".into()));
        }
        if self.transition.nrows() != m || self.transition.ncols() != m || self.weights.len() != m || self.estimates.len() != m {
            return Err(Error::Dimension("bank components disagree on the model count".into()));
        }
        for i in 0..m {
            let row = self.transition.row(i);
            if row.iter().any(|&c| c < T::zero()) || (row.sum() - T::one()).abs() > lit(1e-12) {
                return Err(Error::InvalidArgument(format!("transition row {i} is not a probability vector")));
            }
        }
        let total: T = self.weights.iter().copied().fold(T::zero(), |a, b| a + b);
        if self.weights.iter().any(|&w| w < T::zero()) || (total - T::one()).abs() > lit(1e-9) {
            return Err(Error::InvalidArgument("weights must form a probability vector".into()));
        }
        let n = self.estimates[0].dim();
        if self.estimates.iter().any(|e| e.dim() != n) {
            return Err(Error::Dimension("model estimates must share one state space".into()));
        }
        Ok(())
    }
}

/// Mixing step: merged weights `w^M_k = sum_i C_ik w_i` and, per model, the
/// merged mean and covariance (with spread term) used as its initial estimate.
pub fn imm_mix<T: Real>(bank: &ImmBank<T>) -> Result<(Vec<GaussianEstimate<T>>, Vec<T>)> {
    let m = bank.len();
    let n = bank.estimates[0].dim();
    let mut merged = Vec::with_capacity(m);
    let mut merged_w = Vec::with_capacity(m);
    for k in 0..m {
        let coeff: Vec<T> = (0..m).map(|i| bank.transition[(i, k)] * bank.weights[i]).collect();
        let wk = coeff.iter().copied().fold(T::zero(), |a, b| a + b);
        if wk < lit(STARVATION) {
            return Err(Error::TrackStarvation(k));
        }
        let mut mean = DVector::<T>::zeros(n);
        for (c, e) in coeff.iter().zip(&bank.estimates) {
            mean += &e.mean * *c;
        }
        mean /= wk;
        let mut cov = DMatrix::<T>::zeros(n, n);
        for (c, e) in coeff.iter().zip(&bank.estimates) {
            let d = &e.mean - &mean;
            cov += (&e.cov + &d * d.transpose()) * *c;
        }
        cov /= wk;
        merged.push(GaussianEstimate::from_parts(mean, cov));
        merged_w.push(wk);
    }
    Ok((merged, merged_w))
}

/// Prior and posterior of one model after its filter step.
#[derive(Debug, Clone)]
pub struct TrackOutput<T: Real> {
    pub prior: GaussianEstimate<T>,
    pub posterior: GaussianEstimate<T>,
}

/// `w_k = eta * N(y_k; 0, Q_k) * w^M_k`, evaluated in the log domain and
/// normalized, then floored.
pub fn imm_weight_update<T: Real>(
    bank: &ImmBank<T>,
    tracks: &[TrackOutput<T>],
    merged_weights: &[T],
    z: &DVector<T>,
) -> Result<Vec<T>> {
    let m = bank.len();
    if tracks.len() != m || merged_weights.len() != m {
        return Err(Error::Dimension("one track and merged weight per model".into()));
    }
    let mut logw = Vec::with_capacity(m);
    for ((model, track), &wm) in bank.models.iter().zip(tracks).zip(merged_weights) {
        let at = match bank.innovation {
            InnovationForm::Posterior => &track.posterior,
            InnovationForm::Prior => &track.prior,
        };
        let (y, q) = model.innovation(at, z);
        logw.push(log_gaussian_pdf(&y, &q)? + wm.ln());
    }
    let max = logw.iter().copied().fold(T::min_value().unwrap(), |a, b| a.max(b));
    if !max.is_finite() {
        return Err(Error::DegenerateLikelihood);
    }
    let mut w: Vec<T> = logw.iter().map(|&l| (l - max).exp()).collect();
    let total = w.iter().copied().fold(T::zero(), |a, b| a + b);
    for v in &mut w {
        *v /= total;
    }
    Ok(apply_floor(w, bank.weight_floor))
}

/// Raise weights below `floor` to it and rescale the rest so the total stays 1.
fn apply_floor<T: Real>(mut w: Vec<T>, floor: T) -> Vec<T> {
    let low: Vec<bool> = w.iter().map(|&v| v < floor).collect();
    let n_low = low.iter().filter(|&&b| b).count();
    if n_low == 0 || n_low == w.len() {
        return w;
    }
    let high_total = w
        .iter()
        .zip(&low)
        .filter(|(_, &l)| !l)
        .fold(T::zero(), |a, (&v, _)| a + v);
    let budget = T::one() - floor * lit(n_low as f64);
    for (v, &l) in w.iter_mut().zip(&low) {
        *v = if l { floor } else { *v * budget / high_total };
    }
    w
}

/// Weighted combination of per-model estimates, including the spread term.
pub fn imm_output<T: Real>(weights: &[T], estimates: &[GaussianEstimate<T>]) -> GaussianEstimate<T> {
    let n = estimates[0].dim();
    let mut mean = DVector::<T>::zeros(n);
    for (w, e) in weights.iter().zip(estimates) {
        mean += &e.mean * *w;
    }
    let mut cov = DMatrix::<T>::zeros(n, n);
    for (w, e) in weights.iter().zip(estimates) {
        let d = &e.mean - &mean;
        cov += (&e.cov + &d * d.transpose()) * *w;
    }
    GaussianEstimate::from_parts(mean, cov)
}

/// One IMM cycle: mix, filter each model, reweight, synthesize. The bank is
/// updated in place and the combined estimate is returned.
pub fn imm_step<T: Real>(bank: &mut ImmBank<T>, u: &DVector<T>, z: &DVector<T>) -> Result<GaussianEstimate<T>> {
    let (merged, merged_w) = imm_mix(bank)?;
    let mut tracks = Vec::with_capacity(bank.len());
    for (model, start) in bank.models.iter().zip(&merged) {
        let prior = model.predict(start, u)?;
        let posterior = model.update(&prior, z)?;
        tracks.push(TrackOutput { prior, posterior });
    }
    let weights = imm_weight_update(bank, &tracks, &merged_w, z)?;
    bank.estimates = tracks.into_iter().map(|t| t.posterior).collect();
    bank.weights = weights;
    Ok(imm_output(&bank.weights, &bank.estimates))
}

/// `sum_i l_i z_i z_i^T - (sum_i l_i z_i)(sum_i l_i z_i)^T` for weights summing
/// to one; always PSD, which is why merging never shrinks a covariance below
/// the weighted spread.
pub fn mixture_spread<T: Real>(lambdas: &[T], zs: &[DVector<T>]) -> DMatrix<T> {
    let n = zs[0].len();
    let mut second = DMatrix::<T>::zeros(n, n);
    let mut first = DVector::<T>::zeros(n);
    for (l, z) in lambdas.iter().zip(zs) {
        second += z * z.transpose() * *l;
        first += z * *l;
    }
    second - &first * first.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_keeps_probability_vector() {
        let w = apply_floor(vec![1.0, 0.0, 1e-20], 1e-12);
        assert!(w.iter().all(|&v| v >= 1e-12));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_transition() {
        let e = GaussianEstimate::scalar(0.0, 1.0).unwrap();
        let s = LinearStateSpace::deterministic(DMatrix::identity(1, 1), DMatrix::zeros(1, 1)).unwrap();
        let m = LinearMeasurementModel::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        let r = ImmBank::new(
            vec![ImmModel::Linear(s.clone(), m.clone()), ImmModel::Linear(s, m)],
            DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.9]),
            vec![0.5, 0.5],
            vec![e.clone(), e],
        );
        assert!(r.is_err());
    }
}
