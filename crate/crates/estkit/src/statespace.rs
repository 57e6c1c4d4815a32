//! System and measurement models, discretization, observability and
//! pole-placement gain design.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};

use crate::linalg::{all_finite, char_poly, check_covariance, lit, poly_from_roots, poly_mismatch, rank, select};
use crate::{Error, Real, Result};

/// Default relative tolerance for numeric rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Tolerance on characteristic-polynomial coefficients after gain design.
const PLACEMENT_TOL: f64 = 1e-6;

/// Linear dynamics `x' = A x + B u` with input covariance `sigma_u` and an
/// optional additive process noise `sigma_eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStateSpace<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub sigma_u: DMatrix<T>,
    pub sigma_eps: Option<DMatrix<T>>,
}

impl<T: Real> LinearStateSpace<T> {
    pub fn new(
        a: DMatrix<T>,
        b: DMatrix<T>,
        sigma_u: DMatrix<T>,
        sigma_eps: Option<DMatrix<T>>,
    ) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || b.nrows() != n {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if sigma_u.nrows() != b.ncols() {
            return Err(Error::Dimension("sigma_u must be m x m".into()));
        }
        if !all_finite(&a) || !all_finite(&b) {
            return Err(Error::InvalidModel("A and B must be finite".into()));
        }
        check_covariance(&sigma_u, "sigma_u")?;
        if let Some(e) = &sigma_eps {
            if e.nrows() != n {
                return Err(Error::Dimension("sigma_eps must be n x n".into()));
            }
            check_covariance(e, "sigma_eps")?;
        }
        Ok(Self { a, b, sigma_u, sigma_eps })
    }

    /// Noise-free model with a zero input covariance.
    pub fn deterministic(a: DMatrix<T>, b: DMatrix<T>) -> Result<Self> {
        let m = b.ncols();
        Self::new(a, b, DMatrix::zeros(m, m), None)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// `B sigma_u B^T (+ sigma_eps)`.
    pub fn process_cov(&self) -> DMatrix<T> {
        let q = &self.b * &self.sigma_u * self.b.transpose();
        match &self.sigma_eps {
            Some(e) => q + e,
            None => q,
        }
    }
}

/// Linear measurement `z = H x` with noise covariance `sigma_z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMeasurementModel<T: Real> {
    pub h: DMatrix<T>,
    pub sigma_z: DMatrix<T>,
}

impl<T: Real> LinearMeasurementModel<T> {
    pub fn new(h: DMatrix<T>, sigma_z: DMatrix<T>) -> Result<Self> {
        if h.nrows() == 0 {
            return Err(Error::Dimension("H needs at least one row".into()));
        }
        if sigma_z.nrows() != h.nrows() {
            return Err(Error::Dimension("sigma_z must be p x p".into()));
        }
        if !all_finite(&h) {
            return Err(Error::InvalidModel("H must be finite".into()));
        }
        check_covariance(&sigma_z, "sigma_z")?;
        Ok(Self { h, sigma_z })
    }

    pub fn meas_dim(&self) -> usize {
        self.h.nrows()
    }
}

pub type TransitionFn<T> = Arc<dyn Fn(&DVector<T>, &DVector<T>) -> DVector<T> + Send + Sync>;
pub type TransitionJac<T> = Arc<dyn Fn(&DVector<T>, &DVector<T>) -> DMatrix<T> + Send + Sync>;
pub type MeasurementFn<T> = Arc<dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync>;
pub type MeasurementJac<T> = Arc<dyn Fn(&DVector<T>) -> DMatrix<T> + Send + Sync>;

/// Nonlinear dynamics `x' = g(x, u)` with Jacobians. The callables must be
/// reentrant: the filters may call them from several threads.
#[derive(Clone)]
pub struct NonlinearSystemModel<T: Real> {
    pub g: TransitionFn<T>,
    pub jac_x: TransitionJac<T>,
    pub jac_u: TransitionJac<T>,
    pub sigma_u: DMatrix<T>,
    pub sigma_eps: Option<DMatrix<T>>,
}

impl<T: Real> fmt::Debug for NonlinearSystemModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearSystemModel")
            .field("sigma_u", &self.sigma_u)
            .field("sigma_eps", &self.sigma_eps)
            .finish_non_exhaustive()
    }
}

impl<T: Real> NonlinearSystemModel<T> {
    pub fn from_linear(model: &LinearStateSpace<T>) -> Self {
        let (a, b) = (model.a.clone(), model.b.clone());
        let (a1, b1) = (a.clone(), b.clone());
        Self {
            g: Arc::new(move |x, u| &a * x + &b * u),
            jac_x: Arc::new(move |_, _| a1.clone()),
            jac_u: Arc::new(move |_, _| b1.clone()),
            sigma_u: model.sigma_u.clone(),
            sigma_eps: model.sigma_eps.clone(),
        }
    }

    /// Largest relative deviation of `jac_x` and `jac_u` from central
    /// differences of `g` at `(x, u)`.
    pub fn jacobian_error(&self, x: &DVector<T>, u: &DVector<T>) -> T {
        let fx = |xx: &DVector<T>| (self.g)(xx, u);
        let fu = |uu: &DVector<T>| (self.g)(x, uu);
        let ex = rel_err(&(self.jac_x)(x, u), &central_diff(fx, x));
        let eu = if u.is_empty() {
            T::zero()
        } else {
            rel_err(&(self.jac_u)(x, u), &central_diff(fu, u))
        };
        ex.max(eu)
    }
}

/// Nonlinear measurement `z = h(x)` with Jacobian.
#[derive(Clone)]
pub struct NonlinearMeasurementModel<T: Real> {
    pub h: MeasurementFn<T>,
    pub jac: MeasurementJac<T>,
    pub sigma_z: DMatrix<T>,
}

impl<T: Real> fmt::Debug for NonlinearMeasurementModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearMeasurementModel")
            .field("sigma_z", &self.sigma_z)
            .finish_non_exhaustive()
    }
}

impl<T: Real> NonlinearMeasurementModel<T> {
    pub fn from_linear(model: &LinearMeasurementModel<T>) -> Self {
        let h = model.h.clone();
        let h1 = h.clone();
        Self {
            h: Arc::new(move |x| &h * x),
            jac: Arc::new(move |_| h1.clone()),
            sigma_z: model.sigma_z.clone(),
        }
    }

    pub fn jacobian_error(&self, x: &DVector<T>) -> T {
        rel_err(&(self.jac)(x), &central_diff(|xx| (self.h)(xx), x))
    }
}

fn central_diff<T: Real>(f: impl Fn(&DVector<T>) -> DVector<T>, x: &DVector<T>) -> DMatrix<T> {
    let f0 = f(x);
    let mut j = DMatrix::zeros(f0.len(), x.len());
    for i in 0..x.len() {
        let h = lit::<T>(1e-6) * (T::one() + x[i].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let d = (f(&xp) - f(&xm)) / (h + h);
        j.set_column(i, &d);
    }
    j
}

fn rel_err<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    (a - b).norm() / b.norm().max(T::one())
}

/// Exact zero-order-hold discretization of `dx/dt = A x + B u` over `dt`.
///
/// Returns `(e^{A dt}, [sum_k A^k dt^k / (k+1)!] B dt)`. Both series are
/// summed on a scaled-down step and then squared back up, so large
/// `|A dt|` stays accurate.
pub fn discretize<T: Real>(
    model: &LinearStateSpace<T>,
    dt: T,
    tol: T,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    if !(dt > T::zero()) || !(tol > T::zero()) {
        return Err(Error::InvalidArgument("dt and tol must be positive".into()));
    }
    if !all_finite(&model.a) || !all_finite(&model.b) {
        return Err(Error::InvalidModel("non-finite entries in A or B".into()));
    }
    let n = model.state_dim();
    let norm = model.a.norm() * dt;
    let mut squarings = 0u32;
    let mut h = dt;
    if norm > lit(0.5) {
        squarings = (to_f64_ceil_log2(norm / lit(0.5))).max(0) as u32;
        h = dt / lit(2f64.powi(squarings as i32));
    }
    let m = &model.a * h;
    let id = DMatrix::<T>::identity(n, n);
    // e = sum M^k/k!, f = sum M^k/(k+1)!
    let mut e = id.clone();
    let mut f = id.clone();
    let mut term = id.clone();
    for k in 1..200usize {
        term = &term * &m / lit::<T>(k as f64);
        let fterm = &term / lit::<T>((k + 1) as f64);
        e += &term;
        f += &fterm;
        if term.norm() < tol && fterm.norm() < tol {
            break;
        }
    }
    let mut g = f * h;
    for _ in 0..squarings {
        g = (&id + &e) * &g;
        e = &e * &e;
    }
    Ok((e, g * &model.b))
}

fn to_f64_ceil_log2<T: Real>(x: T) -> i64 {
    crate::linalg::to_f64(x).log2().ceil() as i64
}

/// Stacked `[H; HA; ...; HA^{n-1}]`.
pub fn observability_matrix<T: Real>(a: &DMatrix<T>, h: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    if !a.is_square() || h.ncols() != n {
        return Err(Error::Dimension("A must be n x n and H p x n".into()));
    }
    let p = h.nrows();
    let mut o = DMatrix::zeros(n * p, n);
    let mut block = h.clone();
    for k in 0..n {
        o.view_mut((k * p, 0), (p, n)).copy_from(&block);
        block = &block * a;
    }
    Ok(o)
}

/// `[B, AB, ..., A^{n-1} B]`.
pub fn controllability_matrix<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n {
        return Err(Error::Dimension("A must be n x n and B n x m".into()));
    }
    let m = b.ncols();
    let mut c = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        c.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * &block;
    }
    Ok(c)
}

/// True iff the observability matrix has numeric rank `n` (singular values
/// above `rank_tol * sigma_max`).
pub fn is_observable<T: Real>(a: &DMatrix<T>, h: &DMatrix<T>, rank_tol: T) -> Result<bool> {
    if !(rank_tol > T::zero()) {
        return Err(Error::InvalidArgument("rank_tol must be positive".into()));
    }
    Ok(rank(&observability_matrix(a, h)?, rank_tol) == a.nrows())
}

pub fn is_controllable<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, rank_tol: T) -> Result<bool> {
    Ok(rank(&controllability_matrix(a, b)?, rank_tol) == a.nrows())
}

/// Poles given as real numbers.
pub fn real_poles<T: Real>(p: &[T]) -> Vec<Complex<T>> {
    p.iter().map(|&r| Complex::new(r, T::zero())).collect()
}

/// Ackermann design for a single-input pair: returns `K` such that the
/// eigenvalues of `A - b K^T` are `desired`.
pub fn pole_placement_gain<T: Real>(
    a: &DMatrix<T>,
    b: &DVector<T>,
    desired: &[Complex<T>],
) -> Result<DVector<T>> {
    let n = a.nrows();
    if !a.is_square() || b.len() != n || desired.len() != n {
        return Err(Error::Dimension("need A n x n, b of length n and n poles".into()));
    }
    let bm = DMatrix::from_column_slice(n, 1, b.as_slice());
    let c = controllability_matrix(a, &bm)?;
    if rank(&c, lit(DEFAULT_RANK_TOL)) < n {
        return Err(Error::GainDesign("pair (A, b) is not controllable".into()));
    }
    let coeffs = poly_from_roots(desired)?;
    // phi(A) = A^n + c1 A^{n-1} + ... + cn I, by Horner.
    let mut phi = DMatrix::<T>::identity(n, n);
    for &ck in &coeffs[1..] {
        phi = &phi * a + DMatrix::<T>::identity(n, n) * ck;
    }
    let mut en = DVector::<T>::zeros(n);
    en[n - 1] = T::one();
    let y = c
        .transpose()
        .lu()
        .solve(&en)
        .ok_or_else(|| Error::GainDesign("controllability matrix is singular".into()))?;
    let k = phi.transpose() * y;
    let closed = a - &bm * k.transpose();
    let mismatch = poly_mismatch(&char_poly(&closed), &coeffs);
    if mismatch > lit(PLACEMENT_TOL) {
        return Err(Error::GainDesign(format!(
            "placed polynomial deviates by {:.3e}",
            crate::linalg::to_f64(mismatch)
        )));
    }
    Ok(k)
}

/// Observer gain `L` such that the eigenvalues of `A - L H` are `desired`.
///
/// Single-output pairs are designed by duality. Multi-output pairs need a
/// partition of the states into one block per output; block `j` receives the
/// next `blocks[j].len()` poles from `desired` and is designed on
/// `(A[S_j, S_j], H[j, S_j])`.
pub fn observer_gain<T: Real>(
    a: &DMatrix<T>,
    h: &DMatrix<T>,
    desired: &[Complex<T>],
    decoupling: Option<&[Vec<usize>]>,
) -> Result<DMatrix<T>> {
    let n = a.nrows();
    let p = h.nrows();
    if !a.is_square() || h.ncols() != n || desired.len() != n {
        return Err(Error::Dimension("need A n x n, H p x n and n poles".into()));
    }
    if !is_observable(a, h, lit(DEFAULT_RANK_TOL))? {
        return Err(Error::Unobservable);
    }
    if p == 1 {
        let k = pole_placement_gain(&a.transpose(), &h.row(0).transpose(), desired)?;
        return Ok(DMatrix::from_column_slice(n, 1, k.as_slice()));
    }
    let blocks = decoupling.ok_or_else(|| {
        Error::InvalidPartition("multi-output design needs one state block per output".into())
    })?;
    if blocks.len() != p {
        return Err(Error::InvalidPartition(format!("{} blocks for {p} outputs", blocks.len())));
    }
    let mut seen = vec![false; n];
    for &i in blocks.iter().flatten() {
        if i >= n || seen[i] {
            return Err(Error::InvalidPartition(format!("state {i} out of range or repeated")));
        }
        seen[i] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidPartition("blocks must cover every state".into()));
    }
    let mut l = DMatrix::<T>::zeros(n, p);
    let mut offset = 0;
    for (j, block) in blocks.iter().enumerate() {
        let sub_a = select(a, block, block);
        let sub_h = select(h, &[j], block);
        let poles = &desired[offset..offset + block.len()];
        offset += block.len();
        if !is_observable(&sub_a, &sub_h, lit(DEFAULT_RANK_TOL))? {
            return Err(Error::InvalidPartition(format!("block {j} is not observable from output {j}")));
        }
        let k = pole_placement_gain(&sub_a.transpose(), &sub_h.row(0).transpose(), poles)?;
        for (r, &i) in block.iter().enumerate() {
            l[(i, j)] = k[r];
        }
    }
    let expected = poly_from_roots(desired)?;
    let closed = a - &l * h;
    if poly_mismatch(&char_poly(&closed), &expected) > lit(PLACEMENT_TOL) {
        return Err(Error::InvalidPartition(
            "coupling between blocks moves the assigned poles".into(),
        ));
    }
    Ok(l)
}

/// Named models from the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelName {
    /// Euler-discretized bicycle kinematics, state `[x, y, theta, beta]`,
    /// input `[v, beta_I]`.
    Bicycle,
    /// Bicycle kinematics with steering as input, state `[x, y, theta]`,
    /// input `[v, beta]`.
    BicycleReduced,
    /// Range to a landmark from state `[x, y, theta]`.
    LandmarkRange,
    /// Continuous vehicle lateral model, state `[y, theta, beta]`.
    VehicleLateral,
    /// Continuous linearized double inverted pendulum.
    Dip,
    /// Continuous linearized single inverted pendulum on a cart.
    Sip,
    Cp,
    Cv,
    Ca,
    /// CA transition with a full `[dp, dv, da]` input.
    Unified,
}

impl ModelName {
    pub const ALL: [ModelName; 10] = [
        ModelName::Bicycle,
        ModelName::BicycleReduced,
        ModelName::LandmarkRange,
        ModelName::VehicleLateral,
        ModelName::Dip,
        ModelName::Sip,
        ModelName::Cp,
        ModelName::Cv,
        ModelName::Ca,
        ModelName::Unified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Bicycle => "bicycle",
            ModelName::BicycleReduced => "bicycle_reduced",
            ModelName::LandmarkRange => "landmark_range",
            ModelName::VehicleLateral => "vehicle_lateral",
            ModelName::Dip => "dip",
            ModelName::Sip => "sip",
            ModelName::Cp => "cp",
            ModelName::Cv => "cv",
            ModelName::Ca => "ca",
            ModelName::Unified => "unified",
        }
    }

    /// Parameters that must be present in the map.
    pub fn required_params(self) -> &'static [&'static str] {
        match self {
            ModelName::Bicycle => &["L", "tau_beta", "dt"],
            ModelName::BicycleReduced => &["L", "dt"],
            ModelName::LandmarkRange => &["x_l", "y_l"],
            ModelName::VehicleLateral => &["v", "L", "tau_beta"],
            ModelName::Dip => &["m1", "m2", "L1", "L2", "g"],
            ModelName::Sip => &["g", "L"],
            ModelName::Cp | ModelName::Cv | ModelName::Ca | ModelName::Unified => &["dt"],
        }
    }
}

impl FromStr for ModelName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

/// Output of [`model_library`].
#[derive(Debug, Clone)]
pub enum Model<T: Real> {
    Linear {
        system: LinearStateSpace<T>,
        measurement: Option<LinearMeasurementModel<T>>,
    },
    Nonlinear(NonlinearSystemModel<T>),
    Measurement(NonlinearMeasurementModel<T>),
}

impl<T: Real> Model<T> {
    pub fn linear(&self) -> Option<&LinearStateSpace<T>> {
        match self {
            Model::Linear { system, .. } => Some(system),
            _ => None,
        }
    }

    pub fn linear_measurement(&self) -> Option<&LinearMeasurementModel<T>> {
        match self {
            Model::Linear { measurement, .. } => measurement.as_ref(),
            _ => None,
        }
    }

    pub fn nonlinear(&self) -> Option<&NonlinearSystemModel<T>> {
        match self {
            Model::Nonlinear(m) => Some(m),
            _ => None,
        }
    }

    pub fn measurement(&self) -> Option<&NonlinearMeasurementModel<T>> {
        match self {
            Model::Measurement(m) => Some(m),
            _ => None,
        }
    }
}

/// Build a named model. Besides the required parameters, the optional keys
/// `sigma_u`, `sigma_eps` and `sigma_z` give isotropic variances (defaults
/// 0, none and 1).
pub fn model_library<T: Real>(name: ModelName, params: &BTreeMap<String, f64>) -> Result<Model<T>> {
    for key in name.required_params() {
        match params.get(*key) {
            Some(v) if v.is_finite() => {}
            Some(_) => return Err(Error::InvalidArgument(format!("parameter `{key}` is not finite"))),
            None => return Err(Error::MissingParam((*key).to_string())),
        }
    }
    let p = |k: &str| lit::<T>(params[k]);
    let opt = |k: &str, d: f64| lit::<T>(params.get(k).copied().unwrap_or(d));
    let var_u = opt("sigma_u", 0.0);
    let var_z = opt("sigma_z", 1.0);
    let eps = |n: usize| params.get("sigma_eps").map(|&v| DMatrix::<T>::identity(n, n) * lit::<T>(v));
    let z = T::zero();
    let o = T::one();
    let linear = |a: DMatrix<T>, b: DMatrix<T>, h: Option<DMatrix<T>>| -> Result<Model<T>> {
        let n = a.nrows();
        let m = b.ncols();
        let system = LinearStateSpace::new(a, b, DMatrix::identity(m, m) * var_u, eps(n))?;
        let measurement = match h {
            Some(h) => {
                let q = h.nrows();
                Some(LinearMeasurementModel::new(h, DMatrix::identity(q, q) * var_z)?)
            }
            None => None,
        };
        Ok(Model::Linear { system, measurement })
    };
    match name {
        ModelName::Bicycle => {
            let (l, tau, dt) = (p("L"), p("tau_beta"), p("dt"));
            let g: TransitionFn<T> = Arc::new(move |x, u| {
                let (th, beta, v, bi) = (x[2], x[3], u[0], u[1]);
                DVector::from_vec(vec![
                    x[0] + dt * v * th.cos(),
                    x[1] + dt * v * th.sin(),
                    th + dt * v / l * beta.tan(),
                    beta + dt * (bi - beta) / tau,
                ])
            });
            let jac_x: TransitionJac<T> = Arc::new(move |x, u| {
                let (th, beta, v) = (x[2], x[3], u[0]);
                let c = beta.cos();
                DMatrix::from_row_slice(4, 4, &[
                    o, z, -dt * v * th.sin(), z,
                    z, o, dt * v * th.cos(), z,
                    z, z, o, dt * v / (l * c * c),
                    z, z, z, o - dt / tau,
                ])
            });
            let jac_u: TransitionJac<T> = Arc::new(move |x, _u| {
                let (th, beta) = (x[2], x[3]);
                DMatrix::from_row_slice(4, 2, &[
                    dt * th.cos(), z,
                    dt * th.sin(), z,
                    dt * beta.tan() / l, z,
                    z, dt / tau,
                ])
            });
            Ok(Model::Nonlinear(NonlinearSystemModel {
                g,
                jac_x,
                jac_u,
                sigma_u: DMatrix::identity(2, 2) * var_u,
                sigma_eps: eps(4),
            }))
        }
        ModelName::BicycleReduced => {
            let (l, dt) = (p("L"), p("dt"));
            let g: TransitionFn<T> = Arc::new(move |x, u| {
                let (th, v, beta) = (x[2], u[0], u[1]);
                DVector::from_vec(vec![
                    x[0] + dt * v * th.cos(),
                    x[1] + dt * v * th.sin(),
                    th + dt * v / l * beta.tan(),
                ])
            });
            let jac_x: TransitionJac<T> = Arc::new(move |x, u| {
                let (th, v) = (x[2], u[0]);
                DMatrix::from_row_slice(3, 3, &[
                    o, z, -dt * v * th.sin(),
                    z, o, dt * v * th.cos(),
                    z, z, o,
                ])
            });
            let jac_u: TransitionJac<T> = Arc::new(move |x, u| {
                let (th, v, beta) = (x[2], u[0], u[1]);
                let c = beta.cos();
                DMatrix::from_row_slice(3, 2, &[
                    dt * th.cos(), z,
                    dt * th.sin(), z,
                    dt * beta.tan() / l, dt * v / (l * c * c),
                ])
            });
            Ok(Model::Nonlinear(NonlinearSystemModel {
                g,
                jac_x,
                jac_u,
                sigma_u: DMatrix::identity(2, 2) * var_u,
                sigma_eps: eps(3),
            }))
        }
        ModelName::LandmarkRange => {
            let (xl, yl) = (p("x_l"), p("y_l"));
            let h: MeasurementFn<T> = Arc::new(move |x| {
                let (dx, dy) = (x[0] - xl, x[1] - yl);
                DVector::from_element(1, (dx * dx + dy * dy).sqrt())
            });
            let jac: MeasurementJac<T> = Arc::new(move |x| {
                let (dx, dy) = (x[0] - xl, x[1] - yl);
                let r = (dx * dx + dy * dy).sqrt();
                let mut j = DMatrix::zeros(1, x.len());
                if r > T::zero() {
                    j[(0, 0)] = dx / r;
                    j[(0, 1)] = dy / r;
                }
                j
            });
            Ok(Model::Measurement(NonlinearMeasurementModel {
                h,
                jac,
                sigma_z: DMatrix::from_element(1, 1, var_z),
            }))
        }
        ModelName::VehicleLateral => {
            let (v, l, tau) = (p("v"), p("L"), p("tau_beta"));
            let a = DMatrix::from_row_slice(3, 3, &[z, v, z, z, z, v / l, z, z, -o / tau]);
            let b = DMatrix::from_column_slice(3, 1, &[z, z, o / tau]);
            let h = DMatrix::from_row_slice(1, 3, &[o, z, z]);
            linear(a, b, Some(h))
        }
        ModelName::Dip => {
            let (m1, m2, l1, l2, g) = (p("m1"), p("m2"), p("L1"), p("L2"), p("g"));
            let r = o + m2 / m1;
            let mut a = DMatrix::zeros(6, 6);
            a[(0, 1)] = o;
            a[(1, 0)] = r * g / l1;
            a[(1, 2)] = -(m2 / m1) * g / l1;
            a[(2, 3)] = o;
            a[(3, 0)] = -r * g / l2;
            a[(3, 2)] = r * g / l2;
            a[(4, 5)] = o;
            let mut b = DMatrix::zeros(6, 1);
            b[(5, 0)] = o;
            let mut h = DMatrix::zeros(2, 6);
            h[(0, 0)] = o;
            h[(1, 4)] = o;
            linear(a, b, Some(h))
        }
        ModelName::Sip => {
            let (g, l) = (p("g"), p("L"));
            let a = DMatrix::from_row_slice(4, 4, &[
                z, o, z, z,
                g / l, z, z, z,
                z, z, z, o,
                z, z, z, z,
            ]);
            let b = DMatrix::from_column_slice(4, 1, &[z, -o / l, z, o]);
            let h = DMatrix::from_row_slice(2, 4, &[o, z, z, z, z, z, o, z]);
            linear(a, b, Some(h))
        }
        ModelName::Cp => {
            let a = DMatrix::from_element(1, 1, o);
            linear(a.clone(), a.clone(), Some(a))
        }
        ModelName::Cv => {
            let dt = p("dt");
            let a = DMatrix::from_row_slice(2, 2, &[o, dt, z, o]);
            let b = DMatrix::from_column_slice(2, 1, &[z, o]);
            linear(a, b, Some(DMatrix::from_row_slice(1, 2, &[o, z])))
        }
        ModelName::Ca | ModelName::Unified => {
            let dt = p("dt");
            let a = ca_matrix(dt);
            let b = if name == ModelName::Ca {
                DMatrix::from_column_slice(3, 1, &[z, z, o])
            } else {
                DMatrix::identity(3, 3)
            };
            linear(a, b, Some(DMatrix::from_row_slice(1, 3, &[o, z, z])))
        }
    }
}

fn ca_matrix<T: Real>(dt: T) -> DMatrix<T> {
    let (z, o) = (T::zero(), T::one());
    DMatrix::from_row_slice(3, 3, &[o, dt, dt * dt * lit(0.5), z, o, dt, z, z, o])
}

/// Motion hypotheses for a bank of models sharing the `[p, v, a]` state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kinematic {
    Cp,
    Cv,
    Ca,
}

/// CP, CV or CA dynamics embedded in the common `[p, v, a]` state with the
/// unified input `u = [dp, dv, da]` (`B = I`). Orders above the hypothesis
/// are held at zero and only the matching input channel carries `variance`.
pub fn kinematic_model<T: Real>(kind: Kinematic, dt: T, variance: T) -> Result<LinearStateSpace<T>> {
    let mut a = ca_matrix(dt);
    let mut su = DMatrix::<T>::zeros(3, 3);
    match kind {
        Kinematic::Cp => {
            a = DMatrix::zeros(3, 3);
            a[(0, 0)] = T::one();
            su[(0, 0)] = variance;
        }
        Kinematic::Cv => {
            a[(0, 2)] = T::zero();
            a[(1, 2)] = T::zero();
            a[(2, 2)] = T::zero();
            su[(1, 1)] = variance;
        }
        Kinematic::Ca => {
            su[(2, 2)] = variance;
        }
    }
    LinearStateSpace::new(a, DMatrix::identity(3, 3), su, None)
}
