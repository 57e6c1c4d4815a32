mod common;

use common::*;
use estkit::kalman::{kf_predict, kf_update};
use estkit::linalg::gaussian_pdf;
use estkit::mtt::{
    merge, pda_update, phd_extract, phd_predict, phd_prune_merge, phd_update, Component, DetectionSet,
    GaussianMixture, PhdConfig, Spawn,
};
use estkit::statespace::{LinearMeasurementModel, LinearStateSpace};
use estkit::GaussianEstimate;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

fn cv2d(dt: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(4, 4, &[1.0, 0.0, dt, 0.0, 0.0, 1.0, 0.0, dt, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
}

fn pos_meas(var: f64) -> LinearMeasurementModel<f64> {
    LinearMeasurementModel::new(
        DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
        DMatrix::identity(2, 2) * var,
    )
    .unwrap()
}

fn comp(w: f64, m: &[f64], var: f64) -> Component<f64> {
    Component::new(w, DVector::from_row_slice(m), DMatrix::identity(m.len(), m.len()) * var).unwrap()
}

fn cfg() -> PhdConfig<f64> {
    PhdConfig::new(cv2d(1.0), DMatrix::identity(4, 4) * 0.01, pos_meas(1.0)).unwrap()
}

#[test]
fn empty_intensity_predicts_birth() {
    let mut c = cfg();
    c.birth = GaussianMixture::intensity(vec![comp(0.04, &[0.0; 4], 1.0), comp(0.06, &[5.0; 4], 1.0)]);
    let p = phd_predict(&GaussianMixture::empty(), &c);
    assert_eq!(p, c.birth);
    assert!((p.total_weight() - 0.1).abs() < 1e-15);
}

#[test]
fn predicted_mass_and_count() {
    let mut c = cfg();
    c.p_survive = 0.9;
    c.birth = GaussianMixture::intensity(vec![comp(0.1, &[0.0; 4], 1.0)]);
    c.spawn = vec![
        Spawn { weight: 0.05, a: DMatrix::identity(4, 4), b: DVector::zeros(4), cov: DMatrix::identity(4, 4) },
        Spawn { weight: 0.02, a: cv2d(1.0), b: DVector::from_element(4, 1.0), cov: DMatrix::identity(4, 4) },
    ];
    let prior = GaussianMixture::intensity(vec![comp(0.7, &[1.0, 2.0, 0.5, 0.0], 2.0), comp(1.3, &[9.0, 2.0, 0.0, 1.0], 1.0)]);
    let p = phd_predict(&prior, &c);
    assert_eq!(p.len(), 1 + 2 * (1 + 2));
    let expected = 0.1 + 0.9 * 2.0 + 2.0 * 0.07;
    assert!((p.total_weight() - expected).abs() < 1e-12);
}

#[test]
fn single_component_predict_is_kalman() {
    let mut c = cfg();
    c.p_survive = 1.0;
    let e = GaussianEstimate::new(DVector::from_vec(vec![1.0, 2.0, 0.5, -1.0]), DMatrix::identity(4, 4) * 2.0).unwrap();
    let prior = GaussianMixture::intensity(vec![Component { weight: 1.0, mean: e.mean.clone(), cov: e.cov.clone() }]);
    let p = phd_predict(&prior, &c);
    let sys = LinearStateSpace::new(cv2d(1.0), DMatrix::zeros(4, 1), DMatrix::zeros(1, 1), Some(c.process_cov.clone())).unwrap();
    let kf = kf_predict(&e, &sys, &DVector::zeros(1)).unwrap();
    assert_eq!(p.len(), 1);
    assert!(relv(&p.components[0].mean, &kf.mean) < 1e-15);
    assert!(rel(&p.components[0].cov, &kf.cov) < 1e-15);
}

#[test]
fn update_without_detections_scales_weights() {
    let c = cfg();
    let prior = GaussianMixture::intensity(vec![comp(0.7, &[1.0; 4], 2.0), comp(1.3, &[9.0; 4], 1.0)]);
    let u = phd_update(&prior, &DetectionSet::new(vec![], 0.0).unwrap(), &c).unwrap();
    assert_eq!(u.len(), 2);
    for (a, b) in u.components.iter().zip(&prior.components) {
        assert!((a.weight - 0.1 * b.weight).abs() < 1e-15);
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.cov, b.cov);
    }
}

#[test]
fn single_target_full_detection_is_kalman() {
    let mut c = cfg();
    c.p_detect = 1.0;
    let e = GaussianEstimate::new(DVector::from_vec(vec![1.0, 2.0, 0.5, -1.0]), DMatrix::identity(4, 4) * 2.0).unwrap();
    let prior = GaussianMixture::intensity(vec![Component { weight: 0.8, mean: e.mean.clone(), cov: e.cov.clone() }]);
    let z = DVector::from_vec(vec![1.7, 1.1]);
    let u = phd_update(&prior, &DetectionSet::new(vec![z.clone()], 0.0).unwrap(), &c).unwrap();
    let kf = kf_update(&e, &c.measurement, &z).unwrap();
    assert_eq!(u.components[0].weight, 0.0);
    assert!((u.components[1].weight - 1.0).abs() < 1e-12);
    assert!(relv(&u.components[1].mean, &kf.mean) < 1e-9);
    assert!(rel(&u.components[1].cov, &kf.cov) < 1e-9);
}

#[test]
fn heavy_clutter_leaves_missed_branch() {
    let mut c = cfg();
    c.clutter_density = 1e30;
    let prior = GaussianMixture::intensity(vec![comp(1.0, &[0.0; 4], 1.0)]);
    let u = phd_update(&prior, &DetectionSet::new(vec![DVector::zeros(2)], 0.0).unwrap(), &c).unwrap();
    assert!(u.components[1].weight < 1e-25);
}

#[test]
fn detection_mass_bookkeeping() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut c = cfg();
    c.p_detect = 1.0;
    for _ in 0..20 {
        let j = rng.random_range(1..=5);
        let prior = GaussianMixture::intensity(
            (0..j).map(|_| Component { weight: rng.random_range(0.1..2.0), mean: rand_vec(&mut rng, 4, 5.0), cov: rand_pd(&mut rng, 4) }).collect(),
        );
        let zs: Vec<DVector<f64>> = (0..3).map(|_| rand_vec(&mut rng, 2, 5.0)).collect();
        let u = phd_update(&prior, &DetectionSet::new(zs, 0.0).unwrap(), &c).unwrap();
        assert_eq!(u.len(), j * 4);
        for d in 0..3 {
            let mass: f64 = u.components[j * (d + 1)..j * (d + 2)].iter().map(|c| c.weight).sum();
            assert!((mass - 1.0).abs() < 1e-9);
        }
    }
    // With clutter every detection contributes at most one target.
    c.clutter_density = 0.01;
    let prior = GaussianMixture::intensity(vec![comp(1.0, &[0.0; 4], 1.0)]);
    let u = phd_update(&prior, &DetectionSet::new(vec![DVector::zeros(2), DVector::from_element(2, 3.0)], 0.0).unwrap(), &c).unwrap();
    assert!(u.components[1].weight < 1.0 && u.components[2].weight < 1.0);
}

#[test]
fn prune_merge_bookkeeping() {
    let c = cfg();
    let twin = comp(0.4, &[1.0, 1.0, 0.0, 0.0], 1.0);
    let m = phd_prune_merge(&GaussianMixture::intensity(vec![twin.clone(), twin.clone()]), &c);
    assert_eq!(m.len(), 1);
    assert!((m.components[0].weight - 0.8).abs() < 1e-15);
    assert_eq!(m.components[0].mean, twin.mean);
    assert!(rel(&m.components[0].cov, &twin.cov) < 1e-15);

    let tiny = GaussianMixture::intensity(vec![comp(1e-6, &[0.0; 4], 1.0), comp(2e-6, &[9.0; 4], 1.0)]);
    assert!(phd_prune_merge(&tiny, &c).is_empty());

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let comps: Vec<Component<f64>> = (0..12)
            .map(|_| Component { weight: 10f64.powf(rng.random_range(-7.0..0.0)), mean: rand_vec(&mut rng, 4, 4.0), cov: rand_pd(&mut rng, 4) })
            .collect();
        let pruned: f64 = comps.iter().filter(|x| x.weight < c.prune_threshold).map(|x| x.weight).sum();
        let total: f64 = comps.iter().map(|x| x.weight).sum();
        let out = phd_prune_merge(&GaussianMixture::intensity(comps), &c);
        assert!((out.total_weight() - (total - pruned)).abs() < 1e-14);
    }
}

#[test]
fn merge_three_scalars_by_hand() {
    let cs = [(0.2, 1.0, 0.5), (0.3, 1.4, 0.7), (0.5, 0.8, 0.4)];
    let comps: Vec<Component<f64>> = cs.iter().map(|&(w, m, p)| Component { weight: w, mean: v(m), cov: s(p) }).collect();
    let refs: Vec<&Component<f64>> = comps.iter().collect();
    let out = merge(&refs);
    let w: f64 = 1.0;
    let m = (0.2 * 1.0 + 0.3 * 1.4 + 0.5 * 0.8) / w;
    let p = (0.2 * (0.5 + (1.0 - m) * (1.0 - m)) + 0.3 * (0.7 + (1.4 - m) * (1.4 - m)) + 0.5 * (0.4 + (0.8 - m) * (0.8 - m))) / w;
    assert!((out.weight - w).abs() < 1e-15);
    assert!((out.mean[0] - m).abs() < 1e-15);
    assert!((out.cov[(0, 0)] - p).abs() < 1e-15);
}

#[test]
fn cap_on_component_count() {
    let mut c = cfg();
    c.max_components = 3;
    let comps: Vec<Component<f64>> = (0..10).map(|i| comp(0.1 + i as f64 * 0.01, &[100.0 * i as f64, 0.0, 0.0, 0.0], 1.0)).collect();
    let out = phd_prune_merge(&GaussianMixture::intensity(comps), &c);
    assert_eq!(out.len(), 3);
    assert!((out.components[0].weight - 0.19).abs() < 1e-15);
}

#[test]
fn extraction_copies() {
    let mix = GaussianMixture::intensity(vec![comp(0.6, &[1.0], 1.0), comp(1.6, &[2.0], 1.0), comp(0.5, &[3.0], 1.0)]);
    let xs = phd_extract(&mix);
    assert_eq!(xs.len(), 3);
    assert_eq!(xs.iter().filter(|x| x[0] == 2.0).count(), 2);
}

#[test]
fn pda_cases() {
    let meas = pos_meas(1.0);
    let track = GaussianEstimate::new(DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]), DMatrix::identity(4, 4)).unwrap();
    let z = DVector::from_vec(vec![0.5, -0.3]);
    let one = pda_update(&track, &DetectionSet::new(vec![z.clone()], 0.0).unwrap(), &meas, 9.21).unwrap();
    let kf = kf_update(&track, &meas, &z).unwrap();
    assert!(relv(&one.mean, &kf.mean) < 1e-14 && rel(&one.cov, &kf.cov) < 1e-14);

    let d = DVector::from_vec(vec![0.7, 0.2]);
    let sym = pda_update(&track, &DetectionSet::new(vec![d.clone(), -d], 0.0).unwrap(), &meas, 9.21).unwrap();
    assert!(sym.mean[0].abs() < 1e-14 && sym.mean[1].abs() < 1e-14);

    let zs = [v2(0.3, 0.1), v2(-1.0, 0.8), v2(1.5, 1.5)];
    let out = pda_update(&track, &DetectionSet::new(zs.to_vec(), 0.0).unwrap(), &meas, 9.21).unwrap();
    let sm = DMatrix::identity(2, 2) * 2.0;
    let l: Vec<f64> = zs.iter().map(|z| gaussian_pdf(z, &sm).unwrap()).collect();
    let t: f64 = l.iter().sum();
    let mut mean = DVector::zeros(4);
    for (z, li) in zs.iter().zip(&l) {
        mean += kf_update(&track, &meas, z).unwrap().mean * (li / t);
    }
    assert!(relv(&out.mean, &mean) < 1e-12);

    let far = pda_update(&track, &DetectionSet::new(vec![v2(50.0, 50.0)], 0.0).unwrap(), &meas, 9.21).unwrap();
    assert_eq!(far, track);
}

fn v2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b])
}

/// Two constant-velocity targets crossing at t = 25; returns the fraction of
/// steps where the extracted count is 2.
fn crossing(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = cfg();
    c.p_detect = 0.95;
    let (lo, hi) = ([-10.0, -10.0], [70.0, 60.0]);
    let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
    let clutter_rate = 2.0;
    c.clutter_density = clutter_rate / area;
    let starts = [[0.0, 0.0, 1.0, 1.0], [0.0, 50.0, 1.0, -1.0]];
    c.birth = GaussianMixture::intensity(
        starts.iter().map(|s| Component::new(0.1, DVector::from_vec(vec![s[0], s[1], 0.0, 0.0]), DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 10.0, 4.0, 4.0]))).unwrap()).collect(),
    );
    let mut truths: Vec<DVector<f64>> = starts.iter().map(|s| DVector::from_row_slice(s)).collect();
    let poisson = Poisson::new(clutter_rate).unwrap();
    let mut intensity = GaussianMixture::empty();
    let mut good = 0;
    let steps = 50;
    for t in 0..steps {
        if t > 0 {
            for x in &mut truths {
                *x = &c.a * &*x;
            }
        }
        let mut zs = Vec::new();
        for x in &truths {
            if rng.random::<f64>() < c.p_detect {
                zs.push(v2(x[0] + rng.sample::<f64, _>(StandardNormal), x[1] + rng.sample::<f64, _>(StandardNormal)));
            }
        }
        let n_clutter = poisson.sample(&mut rng) as usize;
        for _ in 0..n_clutter {
            zs.push(v2(rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])));
        }
        let pred = phd_predict(&intensity, &c);
        let upd = phd_update(&pred, &DetectionSet::new(zs, t as f64).unwrap(), &c).unwrap();
        intensity = phd_prune_merge(&upd, &c);
        if phd_extract(&intensity).len() == 2 {
            good += 1;
        }
    }
    good as f64 / steps as f64
}

#[test]
fn two_target_crossing_cardinality() {
    let fracs: Vec<f64> = (0..10).map(crossing).collect();
    let mean = fracs.iter().sum::<f64>() / 10.0;
    assert!(mean >= 0.8, "{fracs:?}");
}
