#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-half_width..half_width))
}

pub fn rand_pd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = rand_mat(rng, n, n);
    &m * m.transpose() + DMatrix::identity(n, n) * 0.1
}

pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

pub fn relv(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

pub fn s(x: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, x)
}

pub fn v(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}
