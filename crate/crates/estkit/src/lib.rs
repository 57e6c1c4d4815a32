//! Recursive state estimation and sensor fusion.
//!
//! The numeric core is generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`). Most callers want the `f64` aliases re-exported here.
//!
//! ```
//! use estkit::{Estimate, Matrix, Vector};
//! use estkit::kalman::fuse_full;
//!
//! let a = Estimate::new(Vector::from_element(1, 23.0), Matrix::from_element(1, 1, 1.0)).unwrap();
//! let b = Estimate::new(Vector::from_element(1, 27.0), Matrix::from_element(1, 1, 1.0)).unwrap();
//! let f = fuse_full(&a, &b).unwrap();
//! assert!((f.mean[0] - 25.0).abs() < 1e-12);
//! ```

pub mod continuous;
mod error;
mod estimate;
pub mod fusion;
pub mod imm;
pub mod kalman;
pub mod linalg;
pub mod mtt;
pub mod nonlinear;
pub mod particle;
pub mod statespace;

pub use error::{Error, Result};
pub use estimate::GaussianEstimate;
pub use nalgebra::Complex;

/// Scalar type accepted by every estimator in the crate.
pub trait Real:
    nalgebra::RealField + Copy + num_traits::FromPrimitive + num_traits::ToPrimitive
{
}

impl<T> Real for T where
    T: nalgebra::RealField + Copy + num_traits::FromPrimitive + num_traits::ToPrimitive
{
}

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
pub type Estimate = GaussianEstimate<f64>;
pub type SplitEstimate = fusion::SplitEstimate<f64>;
pub type GaussianMixture = mtt::GaussianMixture<f64>;
pub type ParticleSet = particle::ParticleSet<f64>;
pub type LinearStateSpace = statespace::LinearStateSpace<f64>;
pub type LinearMeasurementModel = statespace::LinearMeasurementModel<f64>;
pub type NonlinearSystemModel = statespace::NonlinearSystemModel<f64>;
pub type NonlinearMeasurementModel = statespace::NonlinearMeasurementModel<f64>;

pub type Vector32 = nalgebra::DVector<f32>;
pub type Matrix32 = nalgebra::DMatrix<f32>;
pub type Estimate32 = GaussianEstimate<f32>;
