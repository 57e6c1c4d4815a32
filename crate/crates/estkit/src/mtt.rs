//! Multi-target tracking: Gaussian mixtures, the GM-PHD filter and a
//! single-track probabilistic data association update.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{all_finite_vec, check_covariance, gaussian_pdf, lit, mahalanobis2, solve_spd, symmetrize};
use crate::statespace::LinearMeasurementModel;
use crate::{Error, GaussianEstimate, Real, Result};

pub const DEFAULT_PRUNE_THRESHOLD: f64 = 1e-5;
pub const DEFAULT_MERGE_THRESHOLD: f64 = 4.0;
pub const DEFAULT_MAX_COMPONENTS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Component<T: Real> {
    pub weight: T,
    pub mean: DVector<T>,
    pub cov: DMatrix<T>,
}

impl<T: Real> Component<T> {
    pub fn new(weight: T, mean: DVector<T>, cov: DMatrix<T>) -> Result<Self> {
        if !(weight >= T::zero()) {
            return Err(Error::InvalidArgument("component weight must be nonnegative".into()));
        }
        let e = GaussianEstimate::new(mean, cov)?;
        Ok(Self { weight, mean: e.mean, cov: e.cov })
    }
}

/// Whether mixture weights are an intensity (any nonnegative total) or a
/// probability density (total 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MixtureKind {
    #[default]
    Intensity,
    Density,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianMixture<T: Real> {
    pub components: Vec<Component<T>>,
    pub kind: MixtureKind,
}

impl<T: Real> GaussianMixture<T> {
    pub fn intensity(components: Vec<Component<T>>) -> Self {
        Self { components, kind: MixtureKind::Intensity }
    }

    pub fn density(components: Vec<Component<T>>) -> Result<Self> {
        let m = Self { components, kind: MixtureKind::Density };
        if (m.total_weight() - T::one()).abs() > lit(1e-9) {
            return Err(Error::InvalidArgument("density weights must sum to 1".into()));
        }
        Ok(m)
    }

    pub fn empty() -> Self {
        Self::intensity(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Expected number of targets for an intensity.
    pub fn total_weight(&self) -> T {
        self.components.iter().fold(T::zero(), |a, c| a + c.weight)
    }
}

/// Spawn term: a target at `x` spawns one at `a x + b` with covariance
/// `a P a^T + cov` and intensity weight `weight`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spawn<T: Real> {
    pub weight: T,
    pub a: DMatrix<T>,
    pub b: DVector<T>,
    pub cov: DMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhdConfig<T: Real> {
    pub p_survive: T,
    pub p_detect: T,
    /// Clutter intensity per unit measurement volume.
    pub clutter_density: T,
    pub birth: GaussianMixture<T>,
    pub spawn: Vec<Spawn<T>>,
    pub a: DMatrix<T>,
    pub process_cov: DMatrix<T>,
    pub measurement: LinearMeasurementModel<T>,
    pub prune_threshold: T,
    /// Squared Mahalanobis distance below which components merge.
    pub merge_threshold: T,
    pub max_components: usize,
}

impl<T: Real> PhdConfig<T> {
    /// Configuration with no birth, no spawn, no clutter, `p_survive = 0.99`,
    /// `p_detect = 0.9` and the default prune and merge settings.
    pub fn new(a: DMatrix<T>, process_cov: DMatrix<T>, measurement: LinearMeasurementModel<T>) -> Result<Self> {
        let cfg = Self {
            p_survive: lit(0.99),
            p_detect: lit(0.9),
            clutter_density: T::zero(),
            birth: GaussianMixture::empty(),
            spawn: Vec::new(),
            a,
            process_cov,
            measurement,
            prune_threshold: lit(DEFAULT_PRUNE_THRESHOLD),
            merge_threshold: lit(DEFAULT_MERGE_THRESHOLD),
            max_components: DEFAULT_MAX_COMPONENTS,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |p: T| p >= T::zero() && p <= T::one();
        if !unit(self.p_survive) || !unit(self.p_detect) {
            return Err(Error::InvalidArgument("probabilities must lie in [0, 1]".into()));
        }
        if !(self.clutter_density >= T::zero()) {
            return Err(Error::InvalidArgument("clutter density must be nonnegative".into()));
        }
        if !(self.prune_threshold > T::zero() && self.merge_threshold > T::zero()) || self.max_components == 0 {
            return Err(Error::InvalidArgument("prune/merge thresholds must be positive".into()));
        }
        let n = self.a.nrows();
        if self.a.ncols() != n || self.process_cov.shape() != (n, n) || self.measurement.h.ncols() != n {
            return Err(Error::Dimension("PHD dynamics and measurement disagree".into()));
        }
        check_covariance(&self.process_cov, "process covariance")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet<T: Real> {
    pub detections: Vec<DVector<T>>,
    pub timestamp: T,
}

impl<T: Real> DetectionSet<T> {
    pub fn new(detections: Vec<DVector<T>>, timestamp: T) -> Result<Self> {
        if detections.iter().any(|z| !all_finite_vec(z)) {
            return Err(Error::NonFinite("detection"));
        }
        Ok(Self { detections, timestamp })
    }
}

/// Predicted intensity: birth components, then survivors, then spawns
/// (for each prior component, one per spawn term).
pub fn phd_predict<T: Real>(intensity: &GaussianMixture<T>, cfg: &PhdConfig<T>) -> GaussianMixture<T> {
    let mut out = cfg.birth.components.clone();
    for c in &intensity.components {
        out.push(Component {
            weight: cfg.p_survive * c.weight,
            mean: &cfg.a * &c.mean,
            cov: symmetrize(&(&cfg.a * &c.cov * cfg.a.transpose() + &cfg.process_cov)),
        });
    }
    for c in &intensity.components {
        for s in &cfg.spawn {
            out.push(Component {
                weight: c.weight * s.weight,
                mean: &s.a * &c.mean + &s.b,
                cov: symmetrize(&(&s.a * &c.cov * s.a.transpose() + &s.cov)),
            });
        }
    }
    GaussianMixture::intensity(out)
}

/// Updated intensity: missed-detection copies first, then one block of
/// updated components per detection.
pub fn phd_update<T: Real>(
    predicted: &GaussianMixture<T>,
    z: &DetectionSet<T>,
    cfg: &PhdConfig<T>,
) -> Result<GaussianMixture<T>> {
    let h = &cfg.measurement.h;
    let mut out: Vec<Component<T>> = predicted
        .components
        .iter()
        .map(|c| Component { weight: (T::one() - cfg.p_detect) * c.weight, mean: c.mean.clone(), cov: c.cov.clone() })
        .collect();
    struct Pre<T: Real> {
        eta: DVector<T>,
        s: DMatrix<T>,
        k: DMatrix<T>,
        p: DMatrix<T>,
    }
    let mut pre = Vec::with_capacity(predicted.len());
    for c in &predicted.components {
        let s = symmetrize(&(h * &c.cov * h.transpose() + &cfg.measurement.sigma_z));
        let k = solve_spd(&s, &(h * &c.cov), "innovation covariance")?.transpose();
        let n = c.mean.len();
        let p = symmetrize(&((DMatrix::<T>::identity(n, n) - &k * h) * &c.cov));
        pre.push(Pre { eta: h * &c.mean, s, k, p });
    }
    for zj in &z.detections {
        let mut block = Vec::with_capacity(predicted.len());
        let mut total = T::zero();
        for (c, q) in predicted.components.iter().zip(&pre) {
            let w = cfg.p_detect * c.weight * gaussian_pdf(&(zj - &q.eta), &q.s)?;
            total += w;
            block.push(Component { weight: w, mean: &c.mean + &q.k * (zj - &q.eta), cov: q.p.clone() });
        }
        let denom = cfg.clutter_density + total;
        for c in &mut block {
            c.weight = if denom > T::zero() { c.weight / denom } else { T::zero() };
        }
        out.extend(block);
    }
    Ok(GaussianMixture::intensity(out))
}

/// Prune weights below the threshold, merge greedily around the heaviest
/// remaining component, and keep at most `max_components` of the heaviest.
pub fn phd_prune_merge<T: Real>(intensity: &GaussianMixture<T>, cfg: &PhdConfig<T>) -> GaussianMixture<T> {
    let mut left: Vec<&Component<T>> =
        intensity.components.iter().filter(|c| c.weight >= cfg.prune_threshold).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for (i, c) in left.iter().enumerate() {
            if c.weight > left[best].weight {
                best = i;
            }
        }
        let centre = left[best].mean.clone();
        let mut cluster = Vec::new();
        let mut rest = Vec::new();
        for (i, c) in left.into_iter().enumerate() {
            let close = i == best
                || mahalanobis2(&(&c.mean - &centre), &c.cov).map(|d| d <= cfg.merge_threshold).unwrap_or(false);
            if close {
                cluster.push(c);
            } else {
                rest.push(c);
            }
        }
        left = rest;
        out.push(merge(&cluster));
    }
    out.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap_or(std::cmp::Ordering::Equal));
    out.truncate(cfg.max_components);
    GaussianMixture::intensity(out)
}

/// Moment-matched merge of a cluster, including the spread term.
pub fn merge<T: Real>(cluster: &[&Component<T>]) -> Component<T> {
    let n = cluster[0].mean.len();
    let w = cluster.iter().fold(T::zero(), |a, c| a + c.weight);
    let mut mean = DVector::<T>::zeros(n);
    for c in cluster {
        mean += &c.mean * c.weight;
    }
    mean /= w;
    let mut cov = DMatrix::<T>::zeros(n, n);
    for c in cluster {
        let d = &c.mean - &mean;
        cov += (&c.cov + &d * d.transpose()) * c.weight;
    }
    cov /= w;
    Component { weight: w, mean, cov: symmetrize(&cov) }
}

/// State estimates: `round(w)` copies (half rounds up) of every component
/// with `w > 0.5`.
pub fn phd_extract<T: Real>(intensity: &GaussianMixture<T>) -> Vec<DVector<T>> {
    let half: T = lit(0.5);
    let mut out = Vec::new();
    for c in &intensity.components {
        if c.weight > half {
            let copies = (c.weight + half).floor().to_usize().unwrap_or(0);
            out.extend(std::iter::repeat_n(c.mean.clone(), copies));
        }
    }
    out
}

/// Probabilistic data association for one track: detections inside the gate
/// (squared Mahalanobis distance of the innovation at most `gate_threshold`)
/// are weighted by their Gaussian likelihood, normalized over the gate.
pub fn pda_update<T: Real>(
    track: &GaussianEstimate<T>,
    detections: &DetectionSet<T>,
    meas: &LinearMeasurementModel<T>,
    gate_threshold: T,
) -> Result<GaussianEstimate<T>> {
    let h = &meas.h;
    let s = symmetrize(&(h * &track.cov * h.transpose() + &meas.sigma_z));
    let k = solve_spd(&s, &(h * &track.cov), "innovation covariance")?.transpose();
    let eta = h * &track.mean;
    let mut betas = Vec::new();
    let mut means = Vec::new();
    for z in &detections.detections {
        let y = z - &eta;
        if mahalanobis2(&y, &s)? <= gate_threshold {
            betas.push(gaussian_pdf(&y, &s)?);
            means.push(&track.mean + &k * &y);
        }
    }
    let total = betas.iter().fold(T::zero(), |a, &b| a + b);
    if means.is_empty() || !(total > T::zero()) {
        return Ok(track.clone());
    }
    let n = track.dim();
    let p = (DMatrix::<T>::identity(n, n) - &k * h) * &track.cov;
    let mut mean = DVector::<T>::zeros(n);
    for (b, m) in betas.iter().zip(&means) {
        mean += m * (*b / total);
    }
    let mut cov = DMatrix::<T>::zeros(n, n);
    for (b, m) in betas.iter().zip(&means) {
        let d = m - &mean;
        cov += (&p + &d * d.transpose()) * (*b / total);
    }
    Ok(GaussianEstimate::from_parts(mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comp(w: f64) -> Component<f64> {
        Component { weight: w, mean: DVector::zeros(1), cov: DMatrix::identity(1, 1) }
    }

    #[test]
    fn extraction_rounding() {
        let copies = |w| phd_extract(&GaussianMixture::intensity(vec![comp(w)])).len();
        assert_eq!(copies(0.5), 0);
        assert_eq!(copies(0.6), 1);
        assert_eq!(copies(1.5), 2);
        assert_eq!(copies(1.6), 2);
        assert_eq!(copies(2.49), 2);
    }
}
