mod common;

use common::*;
use estkit::kalman::{kf_predict, kf_update};
use estkit::linalg::sample_gaussian;
use estkit::particle::{
    effective_sample_size, pf_step, resample, resample_with, sis_step, LinearGaussianTransition, ParticleSet,
    ProposalModel, ResampleScheme,
};
use estkit::statespace::{LinearMeasurementModel, LinearStateSpace};
use estkit::GaussianEstimate;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn ess_hand_values() {
    assert!((effective_sample_size::<f64>(&[0.8, 0.2]) - 1.0 / (0.64 + 0.04)).abs() < 1e-12);
    assert!((effective_sample_size::<f64>(&[0.8, 0.2]) - 1.470588).abs() < 1e-6);
    assert!((effective_sample_size::<f64>(&[0.1; 10]) - 10.0).abs() < 1e-12);
    assert_eq!(effective_sample_size::<f64>(&[0.0, 0.0, 1.0]), 1.0);
}

#[test]
fn one_hot_resamples_to_copies() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let set = ParticleSet::new((0..5).map(|i| v(i as f64)).collect(), vec![0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
    for scheme in [ResampleScheme::Multinomial, ResampleScheme::Systematic] {
        let r = resample_with(&set, scheme, &mut rng);
        assert!(r.particles.iter().all(|p| p[0] == 2.0));
        assert!(r.weights.iter().all(|&w| w == 0.2));
    }
}

#[test]
fn multinomial_frequencies_follow_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 10000;
    let particles: Vec<DVector<f64>> = (0..n).map(|i| v((i % 4) as f64)).collect();
    let weights: Vec<f64> = (0..n).map(|i| ((i % 4) + 1) as f64 / (2.5 * n as f64)).collect();
    let set = ParticleSet::new(particles, weights).unwrap();
    let r = resample(&set, &mut rng);
    for k in 0..4 {
        let p = (k + 1) as f64 / 10.0;
        let freq = r.particles.iter().filter(|x| x[0] == k as f64).count() as f64 / n as f64;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * sd, "label {k}: {freq} vs {p}");
    }
}

#[test]
fn resampling_preserves_mean_in_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 200;
    let particles: Vec<DVector<f64>> = (0..n).map(|_| v(rng.random_range(-3.0..3.0))).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let set = ParticleSet::new(particles, raw.iter().map(|w| w / total).collect()).unwrap();
    let target = set.mean()[0];
    let means: Vec<f64> = (0..200).map(|_| resample(&set, &mut rng).mean()[0]).collect();
    let avg = means.iter().sum::<f64>() / 200.0;
    let var = means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / 199.0;
    let se = (var / 200.0).sqrt();
    assert!((avg - target).abs() < 3.0 * se, "{avg} vs {target}, se {se}");
}

#[test]
fn constant_ratio_leaves_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let set = ParticleSet::new(vec![v(0.0), v(1.0), v(2.0)], vec![0.2, 0.3, 0.5]).unwrap();
    let out = sis_step(&set, |x, _| x.clone(), |_, _| 7.5, None, &mut rng).unwrap();
    for (a, b) in out.weights.iter().zip(&set.weights) {
        assert!((a - b).abs() < 1e-15);
    }
    let uniform = ParticleSet::uniform(vec![v(0.0); 4]).unwrap();
    let out = sis_step(&uniform, |x, _| x.clone(), |_, _| 1.0, None, &mut rng).unwrap();
    assert!(out.weights.iter().all(|&w| w == 0.25));
}

#[test]
fn importance_sampling_recovers_gaussian_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let set = ParticleSet::uniform(vec![v(0.0); 100_000]).unwrap();
    let target = |x: &DVector<f64>, _: &DVector<f64>| (-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt() / 0.1;
    let out = sis_step(&set, |_, r: &mut ChaCha8Rng| v(r.random_range(-5.0..5.0)), target, None, &mut rng).unwrap();
    assert!(out.mean()[0].abs() < 0.02);
}

#[test]
fn rejects_threshold_outside_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (sys, meas) = tracking_model();
    let prop = LinearGaussianTransition::new(&sys, &meas).unwrap();
    let set = ParticleSet::uniform(vec![DVector::zeros(2); 10]).unwrap();
    assert!(pf_step(&set, &prop, &v(0.0), &DVector::zeros(1), 11.0, &mut rng).is_err());
    assert!(pf_step(&set, &prop, &v(0.0), &DVector::zeros(1), 0.5, &mut rng).is_err());
}

struct Flat;

impl ProposalModel<f64> for Flat {
    type Context = ();
    fn sample<R: Rng + ?Sized>(&self, old: &DVector<f64>, _: &(), rng: &mut R) -> DVector<f64> {
        old.map(|x| x + rng.random_range(-0.1..0.1))
    }
    fn density(&self, _: &DVector<f64>, _: &DVector<f64>, _: &()) -> f64 {
        5.0
    }
    fn transition_density(&self, _: &DVector<f64>, _: &DVector<f64>) -> f64 {
        5.0
    }
    fn likelihood(&self, _: &DVector<f64>, _: &DVector<f64>) -> f64 {
        0.3
    }
}

#[test]
fn constant_likelihood_keeps_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let set = ParticleSet::new(vec![v(0.0), v(1.0)], vec![0.4, 0.6]).unwrap();
    let out = pf_step(&set, &Flat, &v(0.0), &(), 1.0, &mut rng).unwrap();
    assert!((out.weights[0] - 0.4).abs() < 1e-15);
}

fn tracking_model() -> (LinearStateSpace<f64>, LinearMeasurementModel<f64>) {
    let dt = 0.5;
    let sys = LinearStateSpace::new(
        DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]),
        DMatrix::from_column_slice(2, 1, &[dt * dt / 2.0, dt]),
        s(0.2),
        Some(DMatrix::identity(2, 2) * 1e-3),
    )
    .unwrap();
    let meas = LinearMeasurementModel::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), s(0.5)).unwrap();
    (sys, meas)
}

/// Fraction of steps whose PF mean lies within `3 sd_kf / sqrt(N_eff)` of
/// the KF mean in every coordinate.
fn pf_kf_agreement(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sys, meas) = tracking_model();
    let prop = LinearGaussianTransition::new(&sys, &meas).unwrap();
    let n = 20000;
    let mut kf = GaussianEstimate::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
    let init_sqrt = DMatrix::identity(2, 2);
    let mut set = ParticleSet::from_sampler(n, &mut rng, |r| sample_gaussian(r, &kf.mean, &init_sqrt)).unwrap();
    let mut truth = DVector::from_vec(vec![0.0, 1.0]);
    let truth_sqrt = estkit::linalg::sqrt_psd(&sys.process_cov()).unwrap();
    let meas_sd = 0.5f64.sqrt();
    let u = DVector::zeros(1);
    let mut ok = 0;
    let steps = 30;
    for _ in 0..steps {
        truth = sample_gaussian(&mut rng, &(&sys.a * &truth), &truth_sqrt);
        let z = v(truth[0] + meas_sd * rng.sample::<f64, _>(rand_distr::StandardNormal));
        kf = kf_update(&kf_predict(&kf, &sys, &u).unwrap(), &meas, &z).unwrap();
        // n_thr = 1 never resamples inside the step, so N_eff is read before resampling.
        set = pf_step(&set, &prop, &z, &u, 1.0, &mut rng).unwrap();
        let neff = set.effective_sample_size();
        let mean = set.mean();
        if (0..2).all(|i| (mean[i] - kf.mean[i]).abs() <= 3.0 * kf.cov[(i, i)].sqrt() / neff.sqrt()) {
            ok += 1;
        }
        if neff < n as f64 / 2.0 {
            set = resample(&set, &mut rng);
        }
    }
    ok as f64 / steps as f64
}

#[test]
fn particle_filter_tracks_kalman_oracle() {
    let frac = pf_kf_agreement(11);
    assert!(frac >= 0.95, "agreement {frac}");
}

#[test]
fn fixed_seed_reproduces_trajectory() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (sys, meas) = tracking_model();
        let prop = LinearGaussianTransition::new(&sys, &meas).unwrap();
        let mut set = ParticleSet::uniform(vec![DVector::zeros(2); 500]).unwrap();
        for k in 0..10 {
            set = pf_step(&set, &prop, &v(k as f64 * 0.5), &DVector::zeros(1), 250.0, &mut rng).unwrap();
        }
        set
    };
    assert_eq!(run(), run());
}

