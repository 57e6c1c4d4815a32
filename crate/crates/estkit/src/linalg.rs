//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{Cholesky, Complex, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Real, Result};

/// Largest condition number accepted by [`solve_spd`].
pub const MAX_CONDITION: f64 = 1e12;

#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub fn all_finite<T: Real>(m: &DMatrix<T>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn all_finite_vec<T: Real>(v: &DVector<T>) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

/// Largest absolute entry, used as a cheap matrix scale.
pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

pub fn is_symmetric<T: Real>(m: &DMatrix<T>, rel_tol: T) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(T::one());
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    eig.eigenvalues.iter().fold(T::max_value().unwrap(), |a, &b| a.min(b))
}

/// PSD test with tolerance `rel_tol * max|m|` on the smallest eigenvalue.
pub fn is_psd<T: Real>(m: &DMatrix<T>, rel_tol: T) -> bool {
    let scale = max_abs(m);
    min_eigenvalue(m) >= -rel_tol * scale
}

pub fn check_covariance<T: Real>(m: &DMatrix<T>, what: &'static str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{what} must be square")));
    }
    if !all_finite(m) {
        return Err(Error::NonFinite(what));
    }
    let tol = lit::<T>(1e-9);
    if !is_symmetric(m, tol) || !is_psd(m, tol) {
        return Err(Error::NotPositiveDefinite(what));
    }
    Ok(())
}

/// Cholesky factor of a symmetric positive-definite matrix, rejecting inputs
/// whose condition number exceeds [`MAX_CONDITION`].
pub fn cholesky_pd<T: Real>(s: &DMatrix<T>, what: &'static str) -> Result<Cholesky<T, Dyn>> {
    if !all_finite(s) {
        return Err(Error::NonFinite(what));
    }
    let chol = Cholesky::new(symmetrize(s)).ok_or(Error::Singular(what))?;
    let l = chol.l_dirty();
    let mut lo = T::max_value().unwrap();
    let mut hi = T::zero();
    for i in 0..l.nrows() {
        lo = lo.min(l[(i, i)]);
        hi = hi.max(l[(i, i)]);
    }
    if lo <= T::zero() || (hi / lo) * (hi / lo) > lit(MAX_CONDITION) {
        return Err(Error::Singular(what));
    }
    Ok(chol)
}

pub fn solve_spd<T: Real>(s: &DMatrix<T>, b: &DMatrix<T>, what: &'static str) -> Result<DMatrix<T>> {
    Ok(cholesky_pd(s, what)?.solve(b))
}

pub fn inv_spd<T: Real>(s: &DMatrix<T>, what: &'static str) -> Result<DMatrix<T>> {
    let n = s.nrows();
    Ok(symmetrize(&solve_spd(s, &DMatrix::identity(n, n), what)?))
}

/// Error unless `s` is finite and admits a Cholesky factorization.
pub fn check_pd<T: Real>(s: &DMatrix<T>, what: &'static str) -> Result<()> {
    if !all_finite(s) {
        return Err(Error::NonFinite(what));
    }
    Cholesky::new(symmetrize(s)).map(|_| ()).ok_or(Error::Singular(what))
}

/// Inverse of a symmetric positive-definite matrix without the conditioning
/// guard, for information-form algebra where large spreads are legitimate.
pub fn inv_pd<T: Real>(s: &DMatrix<T>, what: &'static str) -> Result<DMatrix<T>> {
    if !all_finite(s) {
        return Err(Error::NonFinite(what));
    }
    let n = s.nrows();
    let chol = Cholesky::new(symmetrize(s)).ok_or(Error::Singular(what))?;
    Ok(symmetrize(&chol.solve(&DMatrix::identity(n, n))))
}

/// Lower-triangular square root of a PSD matrix. Boundary cases get a
/// diagonal jitter of `1e-12 * trace / n`; a zero matrix maps to zero.
pub fn sqrt_psd<T: Real>(p: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = p.nrows();
    if !all_finite(p) {
        return Err(Error::NonFinite("covariance"));
    }
    let sym = symmetrize(p);
    if let Some(c) = Cholesky::new(sym.clone()) {
        return Ok(c.unpack());
    }
    let tr = sym.trace();
    if tr == T::zero() && max_abs(&sym) == T::zero() {
        return Ok(DMatrix::zeros(n, n));
    }
    if tr <= T::zero() {
        return Err(Error::NotPositiveDefinite("covariance"));
    }
    let jitter = lit::<T>(1e-12) * tr / lit(n as f64);
    let mut tries = sym.clone();
    let mut eps = jitter;
    for _ in 0..6 {
        for i in 0..n {
            tries[(i, i)] = sym[(i, i)] + eps;
        }
        if let Some(c) = Cholesky::new(tries.clone()) {
            return Ok(c.unpack());
        }
        eps *= lit(10.0);
    }
    Err(Error::NotPositiveDefinite("covariance"))
}

pub fn singular_values<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn rank<T: Real>(m: &DMatrix<T>, rel_tol: T) -> usize {
    let sv = singular_values(m);
    let smax = sv.iter().fold(T::zero(), |a, &b| a.max(b));
    if smax == T::zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Monic characteristic polynomial, highest power first: `[1, c1, .., cn]`.
pub fn char_poly<T: Real>(a: &DMatrix<T>) -> Vec<T> {
    let n = a.nrows();
    let mut coeffs = vec![T::one()];
    let mut m = DMatrix::<T>::zeros(n, n);
    let id = DMatrix::<T>::identity(n, n);
    let mut c_prev = T::one();
    for k in 1..=n {
        m = a * &m + &id * c_prev;
        let c = -(a * &m).trace() / lit(k as f64);
        coeffs.push(c);
        c_prev = c;
    }
    coeffs
}

/// Real monic polynomial with the given roots; complex roots must come in
/// conjugate pairs.
pub fn poly_from_roots<T: Real>(roots: &[Complex<T>]) -> Result<Vec<T>> {
    let mut p: Vec<Complex<T>> = vec![Complex::new(T::one(), T::zero())];
    for r in roots {
        let mut next = vec![Complex::new(T::zero(), T::zero()); p.len() + 1];
        for (i, c) in p.iter().enumerate() {
            next[i] += *c;
            next[i + 1] -= *c * *r;
        }
        p = next;
    }
    let scale = p.iter().fold(T::one(), |a, c| a.max(c.re.abs()));
    let mut out = Vec::with_capacity(p.len());
    for c in p {
        if c.im.abs() > lit::<T>(1e-9) * scale {
            return Err(Error::InvalidArgument(
                "complex poles must appear in conjugate pairs".into(),
            ));
        }
        out.push(c.re);
    }
    Ok(out)
}

/// Maximum coefficient mismatch, each scaled by `max(1, |expected|)`.
pub fn poly_mismatch<T: Real>(got: &[T], expected: &[T]) -> T {
    got.iter()
        .zip(expected)
        .fold(T::zero(), |acc, (&g, &e)| acc.max((g - e).abs() / e.abs().max(T::one())))
}

pub fn eigenvalues<T: Real>(m: &DMatrix<T>) -> Vec<Complex<T>> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Eigenvalues with numerically split clusters replaced by their mean.
///
/// A defective eigenvalue of multiplicity `k` is only resolved to about
/// `eps^(1/k)` by a Schur solver, but the mean of the computed cluster is
/// accurate to working precision. Eigenvalues closer than
/// `rel_radius * max(1, |lambda|)` (transitively) form one cluster.
pub fn clustered_eigenvalues<T: Real>(m: &DMatrix<T>, rel_radius: T) -> Vec<Complex<T>> {
    let raw = eigenvalues(m);
    let n = raw.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn root(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = cabs(raw[i]).max(T::one());
            if cabs(raw[i] - raw[j]) <= rel_radius * scale {
                let (a, b) = (root(&mut label, i), root(&mut label, j));
                label[a] = b;
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| root(&mut label, i)).collect();
    (0..n)
        .map(|i| {
            let members: Vec<usize> = (0..n).filter(|&j| roots[j] == roots[i]).collect();
            let mut sum = Complex::new(T::zero(), T::zero());
            for &j in &members {
                sum += raw[j];
            }
            sum / lit::<T>(members.len() as f64)
        })
        .collect()
}

fn cabs<T: Real>(c: Complex<T>) -> T {
    (c.re * c.re + c.im * c.im).sqrt()
}

/// Squared Mahalanobis distance of `d` under covariance `s`.
pub fn mahalanobis2<T: Real>(d: &DVector<T>, s: &DMatrix<T>) -> Result<T> {
    let chol = cholesky_pd(s, "innovation covariance")?;
    let y = chol.solve(d);
    Ok(d.dot(&y))
}

/// Log density of a zero-mean Gaussian with covariance `s` evaluated at `d`.
pub fn log_gaussian_pdf<T: Real>(d: &DVector<T>, s: &DMatrix<T>) -> Result<T> {
    let chol = cholesky_pd(s, "innovation covariance")?;
    let y = chol.solve(d);
    let l = chol.l_dirty();
    let mut log_det = T::zero();
    for i in 0..l.nrows() {
        log_det += l[(i, i)].ln();
    }
    log_det *= lit(2.0);
    let p = lit::<T>(d.len() as f64);
    Ok(-(d.dot(&y) + log_det + p * T::two_pi().ln()) * lit(0.5))
}

pub fn gaussian_pdf<T: Real>(d: &DVector<T>, s: &DMatrix<T>) -> Result<T> {
    Ok(log_gaussian_pdf(d, s)?.exp())
}

/// Draw `mean + sqrt * xi` with `xi ~ N(0, I)`.
pub fn sample_gaussian<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    mean: &DVector<T>,
    sqrt: &DMatrix<T>,
) -> DVector<T> {
    let xi = DVector::<T>::from_fn(mean.len(), |_, _| lit(rng.sample::<f64, _>(StandardNormal)));
    mean + sqrt * xi
}

/// Weighted mean and covariance of a point set.
pub fn weighted_moments<T: Real>(points: &[DVector<T>], weights: &[T]) -> (DVector<T>, DMatrix<T>) {
    let n = points[0].len();
    let mut mean = DVector::<T>::zeros(n);
    for (p, &w) in points.iter().zip(weights) {
        mean += p * w;
    }
    let mut cov = DMatrix::<T>::zeros(n, n);
    for (p, &w) in points.iter().zip(weights) {
        let d = p - &mean;
        cov += &d * d.transpose() * w;
    }
    (mean, cov)
}

/// Submatrix of `m` picking the given rows and columns.
pub fn select<T: Real>(m: &DMatrix<T>, rows: &[usize], cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_poly_of_companion() {
        // s^2 + 3s + 2
        let a = DMatrix::<f64>::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let c = char_poly(&a);
        assert!((c[1] - 3.0).abs() < 1e-12 && (c[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn poly_from_quadruple_root() {
        let r = vec![Complex::new(-4.0, 0.0); 4];
        let p = poly_from_roots(&r).unwrap();
        assert_eq!(p, vec![1.0, 16.0, 96.0, 256.0, 256.0]);
    }

    #[test]
    fn conjugate_pair_is_real() {
        let r = [Complex::new(-1.0, 2.0), Complex::new(-1.0, -2.0)];
        assert_eq!(poly_from_roots(&r).unwrap(), vec![1.0, 2.0, 5.0]);
        assert!(poly_from_roots(&r[..1]).is_err());
    }

    #[test]
    fn sqrt_of_zero_is_zero() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(sqrt_psd(&z).unwrap(), z);
    }

    #[test]
    fn sqrt_of_rank_deficient() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = sqrt_psd(&p).unwrap();
        assert!((&l * l.transpose() - p).abs().max() < 1e-6);
    }

    #[test]
    fn scalar_density() {
        let d = DVector::from_element(1, 1.0);
        let s = DMatrix::from_element(1, 1, 4.0);
        let expected = (-0.125f64).exp() / (2.0 * std::f64::consts::PI * 4.0).sqrt();
        assert!((gaussian_pdf(&d, &s).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn rejects_ill_conditioned() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-14]));
        assert!(solve_spd(&s, &DMatrix::identity(2, 2), "s").is_err());
    }
}
