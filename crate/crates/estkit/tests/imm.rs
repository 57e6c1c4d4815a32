mod common;

use common::*;
use estkit::imm::{
    imm_mix, imm_step, imm_weight_update, mixture_spread, ImmBank, ImmModel, InnovationForm, TrackOutput,
};
use estkit::kalman::{kf_predict, kf_update};
use estkit::statespace::{kinematic_model, Kinematic, LinearMeasurementModel, LinearStateSpace};
use estkit::GaussianEstimate;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn scalar_model() -> ImmModel<f64> {
    ImmModel::Linear(
        LinearStateSpace::new(s(1.0), s(1.0), s(0.5), None).unwrap(),
        LinearMeasurementModel::new(s(1.0), s(1.0)).unwrap(),
    )
}

fn scalar_bank(c: DMatrix<f64>, w: Vec<f64>, xs: &[(f64, f64)]) -> ImmBank<f64> {
    let est = xs.iter().map(|&(x, p)| GaussianEstimate::scalar(x, p).unwrap()).collect();
    ImmBank::new(vec![scalar_model(); xs.len()], c, w, est).unwrap()
}

#[test]
fn mix_two_scalar_tracks_against_direct_formulas() {
    let c = [[0.9, 0.1], [0.1, 0.9]];
    let w = [0.5, 0.5];
    let x = [0.0, 2.0];
    let p = [1.0, 1.0];
    let bank = scalar_bank(DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.9]), w.to_vec(), &[(0.0, 1.0), (2.0, 1.0)]);
    let (merged, mw) = imm_mix(&bank).unwrap();
    for k in 0..2 {
        let wk = c[0][k] * w[0] + c[1][k] * w[1];
        let xk = (x[0] * c[0][k] * w[0] + x[1] * c[1][k] * w[1]) / wk;
        let pk = (c[0][k] * w[0] * (p[0] + (x[0] - xk).powi(2)) + c[1][k] * w[1] * (p[1] + (x[1] - xk).powi(2))) / wk;
        assert!((mw[k] - wk).abs() < 1e-15);
        assert!((merged[k].mean[0] - xk).abs() < 1e-14);
        assert!((merged[k].cov[(0, 0)] - pk).abs() < 1e-14);
    }
    assert!((merged[0].mean[0] - 0.2).abs() < 1e-14);
}

#[test]
fn mix_single_model_passes_through() {
    let bank = scalar_bank(s(1.0), vec![1.0], &[(1.5, 0.7)]);
    let (merged, mw) = imm_mix(&bank).unwrap();
    assert_eq!(mw, vec![1.0]);
    assert_eq!(merged[0], bank.estimates[0]);
}

#[test]
fn mix_identical_tracks_has_no_spread() {
    let bank = scalar_bank(DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.4, 0.6]), vec![0.2, 0.8], &[(1.0, 2.0), (1.0, 2.0)]);
    let (merged, _) = imm_mix(&bank).unwrap();
    for m in merged {
        assert!((m.cov[(0, 0)] - 2.0).abs() < 1e-14);
    }
}

#[test]
fn starving_model_is_reported() {
    let bank = scalar_bank(DMatrix::identity(2, 2), vec![1.0, 0.0], &[(0.0, 1.0), (0.0, 1.0)]);
    assert!(matches!(imm_mix(&bank), Err(estkit::Error::TrackStarvation(1))));
}

fn npdf(y: f64, var: f64) -> f64 {
    (-0.5 * y * y / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

#[test]
fn weight_update_matches_hand_densities() {
    for form in [InnovationForm::Posterior, InnovationForm::Prior] {
        let bank = scalar_bank(DMatrix::identity(2, 2), vec![0.5, 0.5], &[(0.0, 1.0), (0.0, 1.0)]).with_innovation(form);
        let tracks = vec![
            TrackOutput { prior: GaussianEstimate::scalar(0.5, 2.0).unwrap(), posterior: GaussianEstimate::scalar(0.8, 0.6).unwrap() },
            TrackOutput { prior: GaussianEstimate::scalar(-1.0, 3.0).unwrap(), posterior: GaussianEstimate::scalar(0.1, 0.9).unwrap() },
        ];
        let z = v(1.0);
        let mw = [0.3, 0.7];
        let w = imm_weight_update(&bank, &tracks, &mw, &z).unwrap();
        let (a, b) = match form {
            InnovationForm::Posterior => (npdf(0.2, 1.6) * 0.3, npdf(0.9, 1.9) * 0.7),
            InnovationForm::Prior => (npdf(0.5, 3.0) * 0.3, npdf(2.0, 4.0) * 0.7),
        };
        assert!((w[0] - a / (a + b)).abs() < 1e-12);
        assert!((w[1] - b / (a + b)).abs() < 1e-12);
    }
}

#[test]
fn weight_update_equal_likelihoods_keeps_merged_weights() {
    let bank = scalar_bank(DMatrix::identity(3, 3), vec![0.2, 0.3, 0.5], &[(0.0, 1.0); 3]);
    let t = TrackOutput { prior: GaussianEstimate::scalar(0.5, 2.0).unwrap(), posterior: GaussianEstimate::scalar(0.8, 0.6).unwrap() };
    let w = imm_weight_update(&bank, &[t.clone(), t.clone(), t], &[0.2, 0.3, 0.5], &v(1.3)).unwrap();
    for (a, b) in w.iter().zip([0.2, 0.3, 0.5]) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn weight_update_likelihood_dominance_respects_floor() {
    let bank = scalar_bank(DMatrix::identity(2, 2), vec![0.5, 0.5], &[(0.0, 1.0); 2]);
    let near = GaussianEstimate::scalar(1.0, 0.01).unwrap();
    let far = GaussianEstimate::scalar(100.0, 0.01).unwrap();
    let tracks = [
        TrackOutput { prior: near.clone(), posterior: near },
        TrackOutput { prior: far.clone(), posterior: far },
    ];
    let w = imm_weight_update(&bank, &tracks, &[0.5, 0.5], &v(1.0)).unwrap();
    assert!(w[0] > 1.0 - 1e-11);
    assert_eq!(w[1], 1e-12);
}

#[test]
fn single_model_step_is_a_kalman_step() {
    let mut bank = scalar_bank(s(1.0), vec![1.0], &[(0.3, 2.0)]);
    let prior = bank.estimates[0].clone();
    let out = imm_step(&mut bank, &v(0.5), &v(1.7)).unwrap();
    let (ImmModel::Linear(sys, meas), _) = (&bank.models[0], ()) else { unreachable!() };
    let kf = kf_update(&kf_predict(&prior, sys, &v(0.5)).unwrap(), meas, &v(1.7)).unwrap();
    assert!((out.mean[0] - kf.mean[0]).abs() < 1e-14);
    assert!((out.cov[(0, 0)] - kf.cov[(0, 0)]).abs() < 1e-14);
}

#[test]
fn identical_tracks_output_equals_any_track() {
    let mut bank = scalar_bank(DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]), vec![0.5, 0.5], &[(0.3, 2.0); 2]);
    let out = imm_step(&mut bank, &v(0.0), &v(1.0)).unwrap();
    assert!((out.mean[0] - bank.estimates[0].mean[0]).abs() < 1e-14);
    assert!((out.cov[(0, 0)] - bank.estimates[0].cov[(0, 0)]).abs() < 1e-14);
}

/// CP/CV/CA bank on a noisy constant-velocity truth; returns final weights.
/// `qs` are the per-model input variances, `r` the measurement sd and `stay`
/// the diagonal of the transition matrix.
fn track_cv_with(seed: u64, form: InnovationForm, qs: [f64; 3], r: f64, stay: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 1.0;
    let models = [(Kinematic::Cp, qs[0]), (Kinematic::Cv, qs[1]), (Kinematic::Ca, qs[2])]
        .into_iter()
        .map(|(k, q)| {
            ImmModel::Linear(
                kinematic_model(k, dt, q).unwrap(),
                LinearMeasurementModel::new(DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]), s(r * r)).unwrap(),
            )
        })
        .collect();
    let init = GaussianEstimate::new(DVector::zeros(3), DMatrix::identity(3, 3) * 10.0).unwrap();
    let c = DMatrix::from_fn(3, 3, |i, j| if i == j { stay } else { (1.0 - stay) / 2.0 });
    let mut bank = ImmBank::new(models, c, vec![1.0 / 3.0; 3], vec![init; 3]).unwrap().with_innovation(form);
    let (mut p, vel) = (0.0, 1.0);
    for _ in 0..50 {
        p += vel * dt;
        let n: f64 = StandardNormal.sample(&mut rng);
        imm_step(&mut bank, &DVector::zeros(3), &v(p + r * n)).unwrap();
        let total: f64 = bank.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
    bank.weights
}

#[test]
fn cv_bank_identifies_constant_velocity() {
    // The prior-innovation likelihood separates CV from the nested CA model;
    // the posterior form scores both almost equally.
    let wins = (0..10)
        .filter(|&seed| {
            let w = track_cv_with(seed, InnovationForm::Prior, [1.0, 0.01, 0.01], 1.0, 0.9);
            w[1] > w[0] && w[1] > w[2]
        })
        .count();
    assert!(wins >= 8, "CV won {wins}/10");
}

#[test]
fn posterior_form_keeps_probability_vector() {
    for seed in 0..3 {
        let w = track_cv_with(seed, InnovationForm::Posterior, [1.0, 0.01, 0.01], 1.0, 0.9);
        assert!(w.iter().all(|&x| x >= 1e-12));
    }
}

#[test]
fn merge_spread_is_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let k = rng.random_range(1..=6);
        let n = rng.random_range(1..=4);
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let lambdas: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let zs: Vec<DVector<f64>> = (0..k).map(|_| rand_vec(&mut rng, n, 5.0)).collect();
        assert!(min_eig(&mixture_spread(&lambdas, &zs)) >= -1e-10);
    }
}
