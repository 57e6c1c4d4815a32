//! Sequential importance sampling with resampling and the particle filter.
//!
//! Randomness comes from a caller-owned generator passed into every call, so
//! a fixed seed reproduces trajectories bit for bit.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::linalg::{inv_pd, lit, log_gaussian_pdf, sample_gaussian, sqrt_psd, to_f64};
use crate::statespace::{LinearMeasurementModel, LinearStateSpace};
use crate::{Error, Real, Result};

/// Below this largest unnormalized weight, weights are recomputed in the
/// log domain.
const LOG_DOMAIN_SWITCH: f64 = 1e-250;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet<T: Real> {
    pub particles: Vec<DVector<T>>,
    pub weights: Vec<T>,
}

impl<T: Real> ParticleSet<T> {
    /// Equally weighted set.
    pub fn uniform(particles: Vec<DVector<T>>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidArgument("need at least one particle".into()));
        }
        let w = T::one() / lit(particles.len() as f64);
        Ok(Self { weights: vec![w; particles.len()], particles })
    }

    pub fn new(particles: Vec<DVector<T>>, weights: Vec<T>) -> Result<Self> {
        if particles.is_empty() || particles.len() != weights.len() {
            return Err(Error::InvalidArgument("one weight per particle, at least one particle".into()));
        }
        let total = weights.iter().copied().fold(T::zero(), |a, b| a + b);
        if weights.iter().any(|&w| !(w >= T::zero())) || (total - T::one()).abs() > lit(1e-9) {
            return Err(Error::InvalidArgument("weights must be nonnegative and sum to 1".into()));
        }
        Ok(Self { particles, weights })
    }

    /// Draw `n` particles from `sampler` with equal weights.
    pub fn from_sampler<R: Rng + ?Sized>(
        n: usize,
        rng: &mut R,
        mut sampler: impl FnMut(&mut R) -> DVector<T>,
    ) -> Result<Self> {
        Self::uniform((0..n).map(|_| sampler(rng)).collect())
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn mean(&self) -> DVector<T> {
        let mut m = DVector::<T>::zeros(self.particles[0].len());
        for (p, &w) in self.particles.iter().zip(&self.weights) {
            m += p * w;
        }
        m
    }

    pub fn effective_sample_size(&self) -> T {
        effective_sample_size(&self.weights)
    }
}

/// `1 / sum w_i^2` for normalized weights.
pub fn effective_sample_size<T: Real>(weights: &[T]) -> T {
    let s = weights.iter().fold(T::zero(), |a, &w| a + w * w);
    T::one() / s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResampleScheme {
    /// Independent draws proportional to weight.
    #[default]
    Multinomial,
    /// One uniform offset with evenly spaced pointers; lower variance.
    Systematic,
}

pub fn resample<T: Real, R: Rng + ?Sized>(set: &ParticleSet<T>, rng: &mut R) -> ParticleSet<T> {
    resample_with(set, ResampleScheme::Multinomial, rng)
}

pub fn resample_with<T: Real, R: Rng + ?Sized>(
    set: &ParticleSet<T>,
    scheme: ResampleScheme,
    rng: &mut R,
) -> ParticleSet<T> {
    let n = set.len();
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0f64;
    for &w in &set.weights {
        acc += to_f64(w);
        cdf.push(acc);
    }
    let total = acc;
    let pick = |u: f64| -> usize {
        let target = u * total;
        cdf.partition_point(|&c| c <= target).min(n - 1)
    };
    let idx: Vec<usize> = match scheme {
        ResampleScheme::Multinomial => (0..n).map(|_| pick(rng.random::<f64>())).collect(),
        ResampleScheme::Systematic => {
            let u0: f64 = rng.random::<f64>();
            (0..n).map(|i| pick((i as f64 + u0) / n as f64)).collect()
        }
    };
    let w = T::one() / lit(n as f64);
    ParticleSet {
        particles: idx.into_iter().map(|i| set.particles[i].clone()).collect(),
        weights: vec![w; n],
    }
}

/// Proposal distribution and model densities for [`pf_step`]. Implementations
/// must be reentrant.
pub trait ProposalModel<T: Real> {
    /// Extra information the proposal may condition on (control input,
    /// measurement, particle history).
    type Context;

    /// Draw `x ~ q(. | old, ctx)`.
    fn sample<R: Rng + ?Sized>(&self, old: &DVector<T>, ctx: &Self::Context, rng: &mut R) -> DVector<T>;
    /// `q(new | old, ctx)`.
    fn density(&self, new: &DVector<T>, old: &DVector<T>, ctx: &Self::Context) -> T;
    /// `p(new | old)`.
    fn transition_density(&self, new: &DVector<T>, old: &DVector<T>) -> T;
    /// `p(z | x)`.
    fn likelihood(&self, z: &DVector<T>, x: &DVector<T>) -> T;

    /// `ln p(z | x)`; override for better behavior far in the tails.
    fn log_likelihood(&self, z: &DVector<T>, x: &DVector<T>) -> T {
        self.likelihood(z, x).ln()
    }

    /// True when `q` is the transition density, so `p / q` cancels.
    fn is_transition(&self) -> bool {
        false
    }
}

/// Bootstrap proposal for a linear-Gaussian model: particles move with the
/// transition density, so the weight factor is the measurement likelihood.
/// The context is the control input.
#[derive(Debug, Clone)]
pub struct LinearGaussianTransition<T: Real> {
    sys: LinearStateSpace<T>,
    q: DMatrix<T>,
    q_sqrt: DMatrix<T>,
    h: DMatrix<T>,
    sz_inv: DMatrix<T>,
    log_norm: T,
}

impl<T: Real> LinearGaussianTransition<T> {
    pub fn new(sys: &LinearStateSpace<T>, meas: &LinearMeasurementModel<T>) -> Result<Self> {
        if meas.h.ncols() != sys.state_dim() {
            return Err(Error::Dimension("H does not fit the state".into()));
        }
        let q = sys.process_cov();
        let sz_inv = inv_pd(&meas.sigma_z, "measurement covariance")?;
        let p = meas.meas_dim();
        let two_pi: T = lit(2.0 * std::f64::consts::PI);
        let log_norm = -(lit::<T>(p as f64) * two_pi.ln() + meas.sigma_z.determinant().ln()) / lit(2.0);
        Ok(Self {
            sys: sys.clone(),
            q_sqrt: sqrt_psd(&q)?,
            q,
            h: meas.h.clone(),
            sz_inv,
            log_norm,
        })
    }
}

impl<T: Real> ProposalModel<T> for LinearGaussianTransition<T> {
    type Context = DVector<T>;

    fn sample<R: Rng + ?Sized>(&self, old: &DVector<T>, u: &DVector<T>, rng: &mut R) -> DVector<T> {
        let mean = &self.sys.a * old + &self.sys.b * u;
        sample_gaussian(rng, &mean, &self.q_sqrt)
    }

    fn density(&self, new: &DVector<T>, old: &DVector<T>, u: &DVector<T>) -> T {
        let d = new - (&self.sys.a * old + &self.sys.b * u);
        log_gaussian_pdf(&d, &self.q).map(|l| l.exp()).unwrap_or_else(|_| T::zero())
    }

    fn transition_density(&self, new: &DVector<T>, old: &DVector<T>) -> T {
        let d = new - &self.sys.a * old;
        log_gaussian_pdf(&d, &self.q).map(|l| l.exp()).unwrap_or_else(|_| T::zero())
    }

    fn likelihood(&self, z: &DVector<T>, x: &DVector<T>) -> T {
        self.log_likelihood(z, x).exp()
    }

    fn log_likelihood(&self, z: &DVector<T>, x: &DVector<T>) -> T {
        let d = z - &self.h * x;
        self.log_norm - (d.transpose() * &self.sz_inv * &d)[(0, 0)] / lit(2.0)
    }

    fn is_transition(&self) -> bool {
        true
    }
}

/// Multiply weights by `factor` (given in linear and log form), normalize,
/// and switch to the log domain when the linear weights underflow.
fn reweight<T: Real>(prev: &[T], factors: &[(T, T)]) -> Result<Vec<T>> {
    let mut w: Vec<T> = prev.iter().zip(factors).map(|(&w, &(f, _))| w * f).collect();
    let max = w.iter().copied().fold(T::zero(), |a, b| a.max(b));
    if !max.is_finite() {
        return Err(Error::Degeneracy("non-finite importance weight"));
    }
    if max < lit(LOG_DOMAIN_SWITCH) {
        let logs: Vec<T> = prev.iter().zip(factors).map(|(&w, &(_, lf))| w.ln() + lf).collect();
        let lmax = logs.iter().copied().fold(T::min_value().unwrap(), |a, b| a.max(b));
        if !lmax.is_finite() {
            return Err(Error::Degeneracy("all importance weights vanished"));
        }
        w = logs.iter().map(|&l| (l - lmax).exp()).collect();
    }
    let total = w.iter().copied().fold(T::zero(), |a, b| a + b);
    if !(total > T::zero()) {
        return Err(Error::Degeneracy("all importance weights vanished"));
    }
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Particle filter step: propose, reweight by `p(z|x) p(x|x') / q(x|x')`,
/// normalize, and resample when `N_eff < n_thr`.
pub fn pf_step<T: Real, P: ProposalModel<T>, R: Rng + ?Sized>(
    set: &ParticleSet<T>,
    proposal: &P,
    z: &DVector<T>,
    ctx: &P::Context,
    n_thr: T,
    rng: &mut R,
) -> Result<ParticleSet<T>> {
    check_threshold(set, n_thr)?;
    let mut particles = Vec::with_capacity(set.len());
    let mut factors = Vec::with_capacity(set.len());
    for old in &set.particles {
        let new = proposal.sample(old, ctx, rng);
        let ll = proposal.log_likelihood(z, &new);
        let lf = if proposal.is_transition() {
            ll
        } else {
            ll + proposal.transition_density(&new, old).ln() - proposal.density(&new, old, ctx).ln()
        };
        factors.push((lf.exp(), lf));
        particles.push(new);
    }
    finish(particles, reweight(&set.weights, &factors)?, n_thr, rng)
}

/// Generic sequential importance sampling with a caller-supplied target to
/// proposal ratio. `n_thr = None` never resamples.
pub fn sis_step<T: Real, R: Rng + ?Sized>(
    set: &ParticleSet<T>,
    mut sample: impl FnMut(&DVector<T>, &mut R) -> DVector<T>,
    ratio: impl Fn(&DVector<T>, &DVector<T>) -> T,
    n_thr: Option<T>,
    rng: &mut R,
) -> Result<ParticleSet<T>> {
    if let Some(t) = n_thr {
        check_threshold(set, t)?;
    }
    let mut particles = Vec::with_capacity(set.len());
    let mut factors = Vec::with_capacity(set.len());
    for old in &set.particles {
        let new = sample(old, rng);
        let r = ratio(&new, old);
        factors.push((r, r.ln()));
        particles.push(new);
    }
    let weights = reweight(&set.weights, &factors)?;
    match n_thr {
        Some(t) => finish(particles, weights, t, rng),
        None => Ok(ParticleSet { particles, weights }),
    }
}

fn check_threshold<T: Real>(set: &ParticleSet<T>, n_thr: T) -> Result<()> {
    if !(n_thr >= T::one() && n_thr <= lit(set.len() as f64)) {
        return Err(Error::InvalidArgument("n_thr must lie in [1, N]".into()));
    }
    Ok(())
}

fn finish<T: Real, R: Rng + ?Sized>(
    particles: Vec<DVector<T>>,
    weights: Vec<T>,
    n_thr: T,
    rng: &mut R,
) -> Result<ParticleSet<T>> {
    let set = ParticleSet { particles, weights };
    if set.effective_sample_size() < n_thr {
        Ok(resample(&set, rng))
    } else {
        Ok(set)
    }
}
