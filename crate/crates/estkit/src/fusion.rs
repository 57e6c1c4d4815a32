//! Fusion of estimates with known, unknown or partially known correlation.

use nalgebra::{DMatrix, DVector};

use crate::kalman::fuse_full;
use crate::linalg::{
    all_finite, all_finite_vec, check_covariance, cholesky_pd, inv_pd, is_psd, lit, min_eigenvalue, solve_spd,
    symmetrize,
};
use crate::{Error, GaussianEstimate, Real, Result};

/// Clamp applied to the split weight before any inflation.
pub const NUMERIC_EPS: f64 = 1e-11;
/// Default bracket width for the golden-section search.
pub const DEFAULT_ERR_TOL: f64 = 1e-5;

/// Estimate whose covariance is split into a part that may be correlated with
/// other estimates (`cov_d`) and a part known to be independent (`cov_i`).
#[derive(Debug, Clone, PartialEq)]
pub struct SplitEstimate<T: Real> {
    pub mean: DVector<T>,
    pub cov_d: DMatrix<T>,
    pub cov_i: DMatrix<T>,
}

impl<T: Real> SplitEstimate<T> {
    pub fn new(mean: DVector<T>, cov_d: DMatrix<T>, cov_i: DMatrix<T>) -> Result<Self> {
        let n = mean.len();
        if cov_d.shape() != (n, n) || cov_i.shape() != (n, n) {
            return Err(Error::Dimension("split covariances must be n x n".into()));
        }
        if !all_finite_vec(&mean) {
            return Err(Error::NonFinite("split mean"));
        }
        check_covariance(&cov_d, "dependent covariance")?;
        check_covariance(&cov_i, "independent covariance")?;
        let total = &cov_d + &cov_i;
        let floor = lit::<T>(1e-12) * total.trace() / lit(n.max(1) as f64);
        if !(min_eigenvalue(&total) > floor) {
            return Err(Error::NotPositiveDefinite("total split covariance"));
        }
        Ok(Self { mean, cov_d, cov_i })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn total_cov(&self) -> DMatrix<T> {
        &self.cov_d + &self.cov_i
    }

    pub fn to_estimate(&self) -> GaussianEstimate<T> {
        GaussianEstimate::from_parts(self.mean.clone(), self.total_cov())
    }
}

/// Information matrix filter: removes the common information `common` that
/// both `e1` and `e2` already contain.
pub fn imf_fuse<T: Real>(
    e1: &GaussianEstimate<T>,
    e2: &GaussianEstimate<T>,
    common: &GaussianEstimate<T>,
) -> Result<GaussianEstimate<T>> {
    same_dim(&[e1, e2, common])?;
    let i1 = inv_pd(&e1.cov, "first covariance")?;
    let i2 = inv_pd(&e2.cov, "second covariance")?;
    let i0 = inv_pd(&common.cov, "common covariance")?;
    let info = symmetrize(&(&i1 + &i2 - &i0));
    let chol = cholesky_pd(&info, "fused information").map_err(|_| Error::InconsistentInputs)?;
    let cov = symmetrize(&chol.inverse());
    let mean = &cov * (&i1 * &e1.mean + &i2 * &e2.mean - &i0 * &common.mean);
    Ok(GaussianEstimate::from_parts(mean, cov))
}

/// Fusion with a known cross-covariance `sigma_12 = E[e1 e2^T]`.
pub fn fuse_known_correlation<T: Real>(
    e1: &GaussianEstimate<T>,
    e2: &GaussianEstimate<T>,
    sigma_12: &DMatrix<T>,
) -> Result<GaussianEstimate<T>> {
    same_dim(&[e1, e2])?;
    let n = e1.dim();
    if sigma_12.shape() != (n, n) {
        return Err(Error::Dimension("cross-covariance must be n x n".into()));
    }
    let s21 = sigma_12.transpose();
    let denom = symmetrize(&(&e1.cov + &e2.cov - sigma_12 - &s21));
    let left = &e1.cov - sigma_12;
    // gain = (S1 - S12) D^-1, via D gain^T = (S1 - S12)^T
    let gain = solve_spd(&denom, &left.transpose(), "correlation denominator")
        .map_err(|_| Error::DegenerateCorrelation)?
        .transpose();
    let mean = &e1.mean + &gain * (&e2.mean - &e1.mean);
    let cov = &e1.cov - &gain * (&e1.cov - &s21);
    Ok(GaussianEstimate::from_parts(mean, cov))
}

/// Federated covariance expansion `S0 -> S0 / w_i` with `sum w_i = 1`.
pub fn federated_expand<T: Real>(sigma_0: &DMatrix<T>, w: &[T]) -> Result<Vec<DMatrix<T>>> {
    let total = w.iter().copied().fold(T::zero(), |a, b| a + b);
    if w.is_empty() || w.iter().any(|&x| !(x > T::zero())) || (total - T::one()).abs() > lit(1e-12) {
        return Err(Error::InvalidArgument("federated weights must be positive and sum to 1".into()));
    }
    Ok(w.iter().map(|&wi| sigma_0 / wi).collect())
}

/// Covariance intersection `S^-1 = w S1^-1 + (1 - w) S2^-1`. Without `w` the
/// determinant-minimizing weight is found by golden section.
pub fn ci_fuse<T: Real>(
    e1: &GaussianEstimate<T>,
    e2: &GaussianEstimate<T>,
    w: Option<T>,
) -> Result<GaussianEstimate<T>> {
    same_dim(&[e1, e2])?;
    let i1 = inv_pd(&e1.cov, "first covariance")?;
    let i2 = inv_pd(&e2.cov, "second covariance")?;
    let w = match w {
        Some(w) if w >= T::zero() && w <= T::one() => w,
        Some(_) => return Err(Error::InvalidArgument("CI weight must lie in [0, 1]".into())),
        None => golden_section_w(
            |w| {
                // det S(w) = 1 / det(w I1 + (1 - w) I2)
                let info = &i1 * w + &i2 * (T::one() - w);
                T::one() / info.determinant()
            },
            lit(DEFAULT_ERR_TOL),
        ),
    };
    if w == T::one() {
        return Ok(e1.clone());
    }
    if w == T::zero() {
        return Ok(e2.clone());
    }
    let info = &i1 * w + &i2 * (T::one() - w);
    let cov = symmetrize(&inv_pd(&info, "CI information")?);
    let mean = &cov * (&i1 * &e1.mean * w + &i2 * &e2.mean * (T::one() - w));
    Ok(GaussianEstimate::from_parts(mean, cov))
}

fn clamp_w<T: Real>(w: T) -> T {
    let eps: T = lit(NUMERIC_EPS);
    if w < eps {
        eps
    } else if w > T::one() - eps {
        T::one() - eps
    } else {
        w
    }
}

/// Golden-section minimization of `objective` on `[0, 1]`. The objective is
/// evaluated at `w` clamped to `[1e-11, 1 - 1e-11]`. After the bracket
/// shrinks below `err_tol`, an end point wins if its value is the smallest of
/// the four tracked values, otherwise the bracket midpoint is returned.
pub fn golden_section_w<T: Real>(objective: impl Fn(T) -> T, err_tol: T) -> T {
    let f = |w: T| objective(clamp_w(w));
    let ratio: T = lit(0.618);
    let (mut wl, mut wr) = (T::zero(), T::one());
    let (mut fwl, mut fwr) = (f(wl), f(wr));
    let (mut sl, mut sr) = (lit::<T>(0.382), ratio);
    let (mut fsl, mut fsr) = (f(sl), f(sr));
    while wr - wl > err_tol {
        if fsl < fsr {
            wr = sr;
            fwr = fsr;
            sr = sl;
            fsr = fsl;
            sl = wl + ratio * (sl - wl);
            fsl = f(sl);
        } else {
            wl = sl;
            fwl = fsl;
            sl = sr;
            fsl = fsr;
            sr = wr - ratio * (wr - sr);
            fsr = f(sr);
        }
    }
    let fmin = fwl.min(fsl).min(fsr).min(fwr);
    if fwl == fmin {
        wl
    } else if fwr == fmin {
        wr
    } else {
        (wl + wr) / lit(2.0)
    }
}

/// Result of a split fusion together with the weight that was used.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitFusion<T: Real> {
    pub estimate: SplitEstimate<T>,
    pub w: T,
}

/// Optimal split weight for fusing `e1` with a (possibly partial) second
/// source `h x` with split covariance `(p2d, p2i)`.
pub fn split_cif_w<T: Real>(
    e1: &SplitEstimate<T>,
    p2d: &DMatrix<T>,
    p2i: &DMatrix<T>,
    h: &DMatrix<T>,
) -> T {
    let eps: T = lit(NUMERIC_EPS);
    if p2d.abs().trace() < eps {
        return T::one();
    }
    if e1.cov_d.abs().trace() < eps {
        return T::zero();
    }
    golden_section_w(
        |w| match inflated_update(e1, p2d, p2i, h, w) {
            Ok((_, p, _)) => p.determinant(),
            Err(_) => T::max_value().unwrap(),
        },
        lit(DEFAULT_ERR_TOL),
    )
}

/// Gain, fused covariance and `I - K H` for a given (clamped) weight.
fn inflated_update<T: Real>(
    e1: &SplitEstimate<T>,
    p2d: &DMatrix<T>,
    p2i: &DMatrix<T>,
    h: &DMatrix<T>,
    w: T,
) -> Result<(DMatrix<T>, DMatrix<T>, DMatrix<T>)> {
    let n = e1.dim();
    let p1 = &e1.cov_d / w + &e1.cov_i;
    let p2 = p2d / (T::one() - w) + p2i;
    let s = symmetrize(&(h * &p1 * h.transpose() + &p2));
    let k = solve_spd(&s, &(h * &p1), "split innovation covariance")?.transpose();
    let ikh = DMatrix::<T>::identity(n, n) - &k * h;
    // Joseph form; equals (I - K H) P1 for this gain but keeps accuracy when
    // a clamped weight inflates P1 by 1e11.
    let p = symmetrize(&(&ikh * &p1 * ikh.transpose() + &k * &p2 * k.transpose()));
    Ok((k, p, ikh))
}

fn split_cif_general<T: Real>(
    e1: &SplitEstimate<T>,
    x2: &DVector<T>,
    p2d: &DMatrix<T>,
    p2i: &DMatrix<T>,
    h: &DMatrix<T>,
) -> Result<SplitFusion<T>> {
    let n = e1.dim();
    let p = x2.len();
    if h.shape() != (p, n) || p2d.shape() != (p, p) || p2i.shape() != (p, p) {
        return Err(Error::Dimension("second source does not fit H".into()));
    }
    check_covariance(p2d, "second dependent covariance")?;
    check_covariance(p2i, "second independent covariance")?;
    let w = split_cif_w(e1, p2d, p2i, h);
    let (k, cov, ikh) = inflated_update(e1, p2d, p2i, h, clamp_w(w))?;
    let mean = &e1.mean + &k * (x2 - h * &e1.mean);
    let cov = symmetrize(&cov);
    let cov_i = symmetrize(&(&ikh * &e1.cov_i * ikh.transpose() + &k * p2i * k.transpose()));
    let cov_d = &cov - &cov_i;
    if !all_finite(&cov) || !all_finite_vec(&mean) {
        return Err(Error::NonFinite("split fusion"));
    }
    Ok(SplitFusion { estimate: SplitEstimate { mean, cov_d, cov_i }, w })
}

/// Split covariance intersection of two complete split estimates.
pub fn split_cif_fuse<T: Real>(e1: &SplitEstimate<T>, e2: &SplitEstimate<T>) -> Result<SplitFusion<T>> {
    if e1.dim() != e2.dim() {
        return Err(Error::Dimension("split estimates differ in dimension".into()));
    }
    let h = DMatrix::<T>::identity(e1.dim(), e1.dim());
    split_cif_general(e1, &e2.mean, &e2.cov_d, &e2.cov_i, &h)
}

/// Split covariance intersection with a partial observation `z = H x` whose
/// noise is split into `(sz_d, sz_i)`.
pub fn split_cif_partial<T: Real>(
    e1: &SplitEstimate<T>,
    z: &DVector<T>,
    sz_d: &DMatrix<T>,
    sz_i: &DMatrix<T>,
    h: &DMatrix<T>,
) -> Result<SplitFusion<T>> {
    split_cif_general(e1, z, sz_d, sz_i, h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport<T: Real> {
    /// Mean of `e e^T` over the run, where `e` is the estimation error.
    pub empirical_cov: DMatrix<T>,
    /// Mean reported covariance over the run.
    pub reported_cov: DMatrix<T>,
    pub min_eigenvalue_of_difference: T,
    /// Allowed negative slack: spectral norm of the matrix of per-entry
    /// three-standard-error bounds on `empirical_cov`.
    pub tolerance: T,
    pub consistent: bool,
}

/// Minimum number of samples accepted by the audits.
pub const MIN_AUDIT_SAMPLES: usize = 30;

/// Check `reported >= E[e e^T]` over a run of `(estimate, truth)` pairs.
pub fn consistency_audit<T: Real>(run: &[(GaussianEstimate<T>, DVector<T>)]) -> Result<ConsistencyReport<T>> {
    let errors: Vec<DVector<T>> = run.iter().map(|(e, x)| &e.mean - x).collect();
    let reported: Vec<DMatrix<T>> = run.iter().map(|(e, _)| e.cov.clone()).collect();
    consistency_audit_errors(&errors, &reported)
}

/// Same audit on raw error vectors and reported covariances, for cases where
/// the error is a component (for example the shared part of a split estimate).
pub fn consistency_audit_errors<T: Real>(errors: &[DVector<T>], reported: &[DMatrix<T>]) -> Result<ConsistencyReport<T>> {
    let n_s = errors.len();
    if n_s < MIN_AUDIT_SAMPLES || reported.len() != n_s {
        return Err(Error::InvalidArgument(format!(
            "audit needs at least {MIN_AUDIT_SAMPLES} samples with one covariance each"
        )));
    }
    let n = errors[0].len();
    let count: T = lit(n_s as f64);
    let mut emp = DMatrix::<T>::zeros(n, n);
    let mut sq = DMatrix::<T>::zeros(n, n);
    let mut rep = DMatrix::<T>::zeros(n, n);
    for (e, r) in errors.iter().zip(reported) {
        let outer = e * e.transpose();
        sq += outer.component_mul(&outer);
        emp += outer;
        rep += r;
    }
    emp /= count;
    rep /= count;
    let three: T = lit(3.0);
    let slack = DMatrix::from_fn(n, n, |i, j| {
        let var = (sq[(i, j)] / count - emp[(i, j)] * emp[(i, j)]).max(T::zero());
        three * (var / count).sqrt()
    });
    let tolerance = min_eigenvalue(&(-slack));
    let diff = symmetrize(&(&rep - &emp));
    let min_eig = min_eigenvalue(&diff);
    Ok(ConsistencyReport {
        empirical_cov: emp,
        reported_cov: rep,
        min_eigenvalue_of_difference: min_eig,
        tolerance: -tolerance,
        consistent: min_eig >= tolerance,
    })
}

/// Covariance divisors of two nodes that repeatedly exchange one estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CircularReasoning<T: Real> {
    /// `(S / S_A, S / S_B)` after rounds `0..=rounds` with naive fusion.
    pub naive: Vec<(T, T)>,
    /// The same with covariance intersection.
    pub ci: Vec<(T, T)>,
}

/// Nodes A and B start from the same scalar estimate. In odd rounds B fuses
/// A's estimate into its own, in even rounds A fuses B's.
pub fn circular_reasoning_demo<T: Real>(rounds: usize) -> Result<CircularReasoning<T>> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("need at least one round".into()));
    }
    let seed = GaussianEstimate::scalar(T::zero(), T::one())?;
    let run = |fuse: &dyn Fn(&GaussianEstimate<T>, &GaussianEstimate<T>) -> Result<GaussianEstimate<T>>| -> Result<Vec<(T, T)>> {
        let (mut a, mut b) = (seed.clone(), seed.clone());
        let mut out = vec![(T::one(), T::one())];
        for r in 1..=rounds {
            if r % 2 == 1 {
                b = fuse(&b, &a)?;
            } else {
                a = fuse(&a, &b)?;
            }
            out.push((T::one() / a.cov[(0, 0)], T::one() / b.cov[(0, 0)]));
        }
        Ok(out)
    };
    Ok(CircularReasoning { naive: run(&|x, y| fuse_full(x, y))?, ci: run(&|x, y| ci_fuse(x, y, None))? })
}

fn same_dim<T: Real>(es: &[&GaussianEstimate<T>]) -> Result<()> {
    let n = es[0].dim();
    if es.iter().any(|e| e.dim() != n) {
        return Err(Error::Dimension("estimates differ in dimension".into()));
    }
    Ok(())
}

/// True when `a - b` is PSD up to `rel_tol` (relative to the larger entry).
pub fn dominates<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, rel_tol: T) -> bool {
    is_psd(&(a - b), rel_tol)
}
