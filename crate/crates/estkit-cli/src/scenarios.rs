//! The scenarios behind `estkit run`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use estkit::continuous::{augmented_stability, integrated_control_step, ContinuousEstimatorState};
use estkit::fusion::{circular_reasoning_demo, consistency_audit, split_cif_fuse, split_cif_partial, SplitEstimate};
use estkit::imm::{imm_step, ImmBank, ImmModel, InnovationForm};
use estkit::kalman::{fuse_full, kf_predict, kf_update};
use estkit::linalg::{mahalanobis2, rank, sample_gaussian, sqrt_psd, weighted_moments};
use estkit::mtt::{phd_extract, phd_predict, phd_prune_merge, phd_update, Component, DetectionSet, GaussianMixture, PhdConfig};
use estkit::nonlinear::{ckf_predict, ekf_predict, ekf_update, sigma_point_update, ukf_predict, UkfConfig};
use estkit::particle::{pf_step, resample, LinearGaussianTransition, ParticleSet};
use estkit::statespace::{
    kinematic_model, model_library, observability_matrix, observer_gain, pole_placement_gain, real_poles, Kinematic,
    LinearMeasurementModel, LinearStateSpace, ModelName, DEFAULT_RANK_TOL,
};
use estkit::{Complex, GaussianEstimate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde_json::{json, Map, Value};

use crate::config::{Config, Scenario};
use crate::trace::TraceRecord;

/// Message reported when the pendulum falls over.
pub const CONTROL_FAILURE: &str = "Control failure!";

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    /// A stochastic scenario was started without a seed.
    MissingSeed(Scenario),
    /// Parameters that pass the per-key checks but not the scenario's own.
    Invalid(String),
    Estimation(estkit::Error),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::MissingSeed(s) => write!(f, "seed is required for scenario `{s}`"),
            ScenarioError::Invalid(msg) => f.write_str(msg),
            ScenarioError::Estimation(e) => write!(f, "estimation failed: {e}"),
        }
    }
}

impl std::error::Error for ScenarioError {}

impl From<estkit::Error> for ScenarioError {
    fn from(e: estkit::Error) -> Self {
        ScenarioError::Estimation(e)
    }
}

type Result<T> = std::result::Result<T, ScenarioError>;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub records: Vec<TraceRecord>,
    /// Scenario metrics, printed as the `metrics` block of the summary.
    pub metrics: Map<String, Value>,
    /// Set when the scenario ran but its objective failed.
    pub failure: Option<String>,
}

impl ScenarioOutput {
    fn ok(records: Vec<TraceRecord>, metrics: Value) -> Self {
        Self { records, metrics: into_map(metrics), failure: None }
    }
}

fn into_map(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        other => Map::from_iter([("value".to_string(), other)]),
    }
}

/// Run `cfg.scenario`; `seed` overrides the seed in the config.
pub fn run_scenario(cfg: &Config, seed: Option<u64>) -> Result<ScenarioOutput> {
    let seed = seed.or(cfg.seed);
    let rng = || seed.map(ChaCha8Rng::seed_from_u64).ok_or(ScenarioError::MissingSeed(cfg.scenario));
    match cfg.scenario {
        Scenario::Observability => observability(cfg),
        Scenario::SipControl => sip_control(cfg, &mut rng()?),
        Scenario::ImmTrack => imm_track(cfg, &mut rng()?),
        Scenario::PfVsKf => pf_vs_kf(cfg, &mut rng()?),
        Scenario::CifNetwork => cif_network(cfg, &mut rng()?),
        Scenario::CircularReasoning => circular_reasoning(cfg),
        Scenario::PhdTrack => phd_track(cfg, &mut rng()?),
        Scenario::UkfCkfLandmark => ukf_ckf_landmark(cfg, &mut rng()?),
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn params(cfg: &Config, keys: &[(&str, &str)]) -> BTreeMap<String, f64> {
    keys.iter().map(|(model_key, cfg_key)| (model_key.to_string(), cfg.param(cfg_key))).collect()
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn complex_list(eigs: &[Complex<f64>]) -> Vec<[f64; 2]> {
    eigs.iter().map(|e| [e.re, e.im]).collect()
}

fn fraction(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn observability(cfg: &Config) -> Result<ScenarioOutput> {
    let dip = model_library::<f64>(ModelName::Dip, &params(cfg, &[("m1", "m1"), ("m2", "m2"), ("L1", "L1"), ("L2", "L2"), ("g", "g")]))?;
    let lateral = model_library::<f64>(ModelName::VehicleLateral, &params(cfg, &[("v", "v"), ("L", "L"), ("tau_beta", "tau_beta")]))?;
    let sip = model_library::<f64>(ModelName::Sip, &params(cfg, &[("g", "g"), ("L", "L")]))?;
    let linear = |m: &estkit::statespace::Model<f64>| {
        let a = m.linear().expect("linear model").a.clone();
        let h = m.linear_measurement().expect("measured model").h.clone();
        (a, h)
    };
    let (sip_a, _) = linear(&sip);
    let cart_only = DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 1.0, 0.0]);
    let systems = [("dip", linear(&dip)), ("vehicle_lateral", linear(&lateral)), ("sip_cart_only", (sip_a, cart_only))];

    let mut records = Vec::new();
    let mut report = Vec::new();
    let mut metrics = Map::new();
    for (i, (name, (a, h))) in systems.iter().enumerate() {
        let o = observability_matrix(a, h)?;
        let n = a.nrows();
        let r = rank(&o, DEFAULT_RANK_TOL);
        let observable = r == n;
        records.push(
            TraceRecord::new(i as f64)
                .extra("observable", f64::from(u8::from(observable)))
                .extra("rank", r as f64)
                .extra("states", n as f64),
        );
        let verdict = if observable { "observable" } else { "unobservable" };
        report.push(format!("{name}: {verdict} (rank {r} of {n})"));
        metrics.insert(
            name.to_string(),
            json!({ "observable": observable, "rank": r, "states": n, "observability_matrix": rows_of(&o) }),
        );
    }
    metrics.insert("report".into(), json!(report));
    Ok(ScenarioOutput { records, metrics, failure: None })
}

fn sip_control(cfg: &Config, rng: &mut ChaCha8Rng) -> Result<ScenarioOutput> {
    let (g, len, dt) = (cfg.param("g"), cfg.param("L"), cfg.dt);
    let sd = cfg.param("meas_noise");
    let mut model_params = params(cfg, &[("g", "g"), ("L", "L")]);
    model_params.insert("sigma_z".into(), sd * sd);
    let model = model_library::<f64>(ModelName::Sip, &model_params)?;
    let sys = model.linear().expect("linear model").clone();
    let meas = model.linear_measurement().expect("measured model").clone();

    let k = pole_placement_gain(&sys.a, &sys.b.column(0).into_owned(), &real_poles(&[cfg.param("controller_pole"); 4]))?;
    let k = DMatrix::from_column_slice(4, 1, k.as_slice());
    let l = observer_gain(&sys.a, &meas.h, &real_poles(&[cfg.param("observer_pole"); 4]), Some(&[vec![0, 1], vec![2, 3]]))?;
    let spectrum = augmented_stability(&sys.a, &sys.b, &k, &l, &meas.h);

    let mut truth = DVector::from_vec(vec![cfg.param("theta0"), 0.0, cfg.param("x0"), 0.0]);
    let init_sd = cfg.param("init_noise");
    let start = truth.map(|x| x + init_sd * normal(rng));
    let mut est = ContinuousEstimatorState::observer(start);
    let mut records = Vec::with_capacity(cfg.steps);
    let mut failure = None;
    for step in 1..=cfg.steps {
        let z = DVector::from_vec(vec![truth[0] + sd * normal(rng), truth[2] + sd * normal(rng)]);
        let (next, u) = integrated_control_step(&est, &sys, &meas, &k, &l, &z, dt);
        est = next;
        // Nonlinear plant driven by cart acceleration `a`:
        // theta'' = (g sin theta - a cos theta) / L, x'' = a.
        let (th, acc) = (truth[0], u[0]);
        let d = DVector::from_vec(vec![truth[1], (g * th.sin() - acc * th.cos()) / len, truth[3], acc]);
        truth += d * dt;
        let mut r = TraceRecord::new(step as f64 * dt).extra("u", acc);
        r.truth = vec_of(&truth);
        r.estimate = vec_of(&est.x_hat);
        records.push(r);
        if truth[0].abs() >= FRAC_PI_2 || !truth.iter().all(|x| x.is_finite()) {
            failure = Some(CONTROL_FAILURE.to_string());
            break;
        }
    }
    let (theta, x) = (truth[0], truth[2]);
    let metrics = json!({
        "final_theta": theta,
        "final_x": x,
        "converged": failure.is_none() && theta.abs() < 0.01 && x.abs() < 0.01,
        "gain_k": k.iter().copied().collect::<Vec<f64>>(),
        "gain_l": rows_of(&l),
        "controller_eigenvalues": complex_list(&spectrum.controller),
        "observer_eigenvalues": complex_list(&spectrum.observer),
        "stable": spectrum.stable,
    });
    Ok(ScenarioOutput { records, metrics: into_map(metrics), failure })
}

fn imm_track(cfg: &Config, rng: &mut ChaCha8Rng) -> Result<ScenarioOutput> {
    let dt = cfg.dt;
    let r = cfg.param("meas_sd");
    let stay = cfg.param("stay");
    let names = ["cp", "cv", "ca"];
    let kinds = [(Kinematic::Cp, "q_cp"), (Kinematic::Cv, "q_cv"), (Kinematic::Ca, "q_ca")];
    let meas = LinearMeasurementModel::new(DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]), DMatrix::from_element(1, 1, r * r))?;
    let mut models = Vec::new();
    for (kind, key) in kinds {
        models.push(ImmModel::Linear(kinematic_model(kind, dt, cfg.param(key))?, meas.clone()));
    }
    let init = GaussianEstimate::new(DVector::zeros(3), DMatrix::identity(3, 3) * cfg.param("init_var"))?;
    let c = DMatrix::from_fn(3, 3, |i, j| if i == j { stay } else { (1.0 - stay) / 2.0 });
    let mut bank = ImmBank::new(models, c, vec![1.0 / 3.0; 3], vec![init; 3])?.with_innovation(InnovationForm::Prior);

    let vel = cfg.param("velocity");
    let mut p = 0.0;
    let mut records = Vec::with_capacity(cfg.steps);
    let mut sq_err = 0.0;
    let u = DVector::zeros(3);
    for step in 1..=cfg.steps {
        p += vel * dt;
        let z = DVector::from_element(1, p + r * normal(rng));
        let out = imm_step(&mut bank, &u, &z)?;
        sq_err += (out.mean[0] - p).powi(2);
        let mut rec = TraceRecord::new(step as f64 * dt);
        for (name, w) in names.iter().zip(&bank.weights) {
            rec = rec.extra(&format!("w_{name}"), *w);
        }
        rec.truth = vec![p, vel, 0.0];
        rec.estimate = vec_of(&out.mean);
        rec.cov_diag = vec_of(&out.cov_diag());
        records.push(rec);
    }
    let best = (0..3).max_by(|&i, &j| bank.weights[i].total_cmp(&bank.weights[j])).unwrap_or(0);
    let weights: Map<String, Value> = names.iter().zip(&bank.weights).map(|(n, w)| (n.to_string(), json!(w))).collect();
    let metrics = json!({
        "final_weights": weights,
        "dominant_model": names[best],
        "position_rmse": (sq_err / cfg.steps as f64).sqrt(),
    });
    Ok(ScenarioOutput::ok(records, metrics))
}

fn pf_vs_kf(cfg: &Config, rng: &mut ChaCha8Rng) -> Result<ScenarioOutput> {
    let dt = cfg.dt;
    let n = cfg.count("particles");
    let sys = LinearStateSpace::new(
        DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]),
        DMatrix::from_column_slice(2, 1, &[dt * dt / 2.0, dt]),
        DMatrix::from_element(1, 1, cfg.param("sigma_u")),
        Some(DMatrix::identity(2, 2) * cfg.param("sigma_eps")),
    )?;
    let meas = LinearMeasurementModel::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DMatrix::from_element(1, 1, cfg.param("sigma_z")))?;
    let prop = LinearGaussianTransition::new(&sys, &meas)?;
    let mut kf = GaussianEstimate::new(DVector::zeros(2), DMatrix::identity(2, 2))?;
    let init_sqrt = DMatrix::identity(2, 2);
    let mut set = ParticleSet::from_sampler(n, rng, |r| sample_gaussian(r, &kf.mean, &init_sqrt))?;
    let mut truth = DVector::from_vec(vec![0.0, 1.0]);
    let truth_sqrt = sqrt_psd(&sys.process_cov())?;
    let meas_sd = cfg.param("sigma_z").sqrt();
    let threshold = cfg.param("resample_fraction") * n as f64;
    let u = DVector::zeros(1);
    let (mut agree, mut resamples) = (0, 0);
    let mut records = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        truth = sample_gaussian(rng, &(&sys.a * &truth), &truth_sqrt);
        let z = DVector::from_element(1, truth[0] + meas_sd * normal(rng));
        kf = kf_update(&kf_predict(&kf, &sys, &u)?, &meas, &z)?;
        // A threshold of one particle never resamples inside the step, so
        // N_eff and the weighted mean are read before resampling.
        set = pf_step(&set, &prop, &z, &u, 1.0, rng)?;
        let neff = set.effective_sample_size();
        let (mean, cov) = weighted_moments(&set.particles, &set.weights);
        let within = (0..2).all(|i| (mean[i] - kf.mean[i]).abs() <= 3.0 * kf.cov[(i, i)].sqrt() / neff.sqrt());
        agree += usize::from(within);
        let mut rec = TraceRecord::new(step as f64 * dt)
            .extra("agree", f64::from(u8::from(within)))
            .extra("kf_est_0", kf.mean[0])
            .extra("kf_est_1", kf.mean[1])
            .extra("kf_var_0", kf.cov[(0, 0)])
            .extra("kf_var_1", kf.cov[(1, 1)])
            .extra("n_eff", neff);
        rec.truth = vec_of(&truth);
        rec.estimate = vec_of(&mean);
        rec.cov_diag = vec_of(&cov.diagonal());
        records.push(rec);
        if neff < threshold {
            set = resample(&set, rng);
            resamples += 1;
        }
    }
    let metrics = json!({
        "agreement_fraction": fraction(agree, cfg.steps),
        "particles": n,
        "resamples": resamples,
    });
    Ok(ScenarioOutput::ok(records, metrics))
}

fn cif_network(cfg: &Config, rng: &mut ChaCha8Rng) -> Result<ScenarioOutput> {
    let nodes = cfg.count("nodes");
    let runs = cfg.count("runs");
    if nodes < 2 {
        return Err(ScenarioError::Invalid("params.nodes must be at least 2".into()));
    }
    if runs < estkit::fusion::MIN_AUDIT_SAMPLES {
        return Err(ScenarioError::Invalid(format!(
            "params.runs must be at least {} for the consistency audit",
            estkit::fusion::MIN_AUDIT_SAMPLES
        )));
    }
    let dt = cfg.dt;
    let a = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
    let b = DMatrix::from_column_slice(2, 1, &[dt * dt / 2.0, dt]);
    let sys = LinearStateSpace::new(a.clone(), b, DMatrix::from_element(1, 1, cfg.param("q")), None)?;
    let q = sys.process_cov();
    let q_sqrt = sqrt_psd(&q)?;
    let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let (r_min, r_max) = (cfg.param("r_min"), cfg.param("r_max"));
    let sensors: Vec<LinearMeasurementModel<f64>> = (0..nodes)
        .map(|i| {
            let r = r_min + (r_max - r_min) * i as f64 / (nodes - 1) as f64;
            LinearMeasurementModel::new(h.clone(), DMatrix::from_element(1, 1, r))
        })
        .collect::<estkit::Result<_>>()?;
    let p0 = DMatrix::identity(2, 2) * cfg.param("init_var");
    let p0_sqrt = sqrt_psd(&p0)?;
    let zero = DMatrix::zeros(1, 1);
    let u = DVector::zeros(1);

    // Node 0 per step and run: (split, naive, truth), plus run 0 extras.
    let mut split_hist: Vec<Vec<(GaussianEstimate<f64>, DVector<f64>)>> = vec![Vec::with_capacity(runs); cfg.steps];
    let mut naive_hist: Vec<Vec<(GaussianEstimate<f64>, DVector<f64>)>> = vec![Vec::with_capacity(runs); cfg.steps];
    let mut run0 = Vec::with_capacity(cfg.steps);
    for run in 0..runs {
        let mut truth = DVector::from_vec(vec![0.0, 1.0]);
        // Every node starts from the same broadcast prior.
        let prior_mean = sample_gaussian(rng, &truth, &p0_sqrt);
        let mut split: Vec<SplitEstimate<f64>> =
            (0..nodes).map(|_| SplitEstimate::new(prior_mean.clone(), p0.clone(), DMatrix::zeros(2, 2))).collect::<estkit::Result<_>>()?;
        let mut naive = vec![GaussianEstimate::new(prior_mean.clone(), p0.clone())?; nodes];
        for step in 0..cfg.steps {
            truth = sample_gaussian(rng, &(&a * &truth), &q_sqrt);
            let zs: Vec<DVector<f64>> =
                sensors.iter().map(|s| DVector::from_element(1, truth[0] + s.sigma_z[(0, 0)].sqrt() * normal(rng))).collect();
            let mut local_split = Vec::with_capacity(nodes);
            let mut local_naive = Vec::with_capacity(nodes);
            for i in 0..nodes {
                // Process noise is common to all nodes, so it joins the dependent part.
                let e = &split[i];
                let pred = SplitEstimate {
                    mean: &a * &e.mean,
                    cov_d: &a * &e.cov_d * a.transpose() + &q,
                    cov_i: &a * &e.cov_i * a.transpose(),
                };
                local_split.push(split_cif_partial(&pred, &zs[i], &zero, &sensors[i].sigma_z, &h)?.estimate);
                local_naive.push(kf_update(&kf_predict(&naive[i], &sys, &u)?, &sensors[i], &zs[i])?);
            }
            let mut w0 = 0.0;
            for i in 0..nodes {
                let j = (i + 1) % nodes;
                let f = split_cif_fuse(&local_split[i], &local_split[j])?;
                if i == 0 {
                    w0 = f.w;
                }
                // After an exchange nothing in the estimate is private any more.
                split[i] = SplitEstimate::new(f.estimate.mean.clone(), f.estimate.total_cov(), DMatrix::zeros(2, 2))?;
                naive[i] = fuse_full(&local_naive[i], &local_naive[j])?;
            }
            split_hist[step].push((split[0].to_estimate(), truth.clone()));
            naive_hist[step].push((naive[0].clone(), truth.clone()));
            if run == 0 {
                run0.push((truth.clone(), split[0].to_estimate(), naive[0].clone(), w0));
            }
        }
    }

    let mean_nees = |hist: &[(GaussianEstimate<f64>, DVector<f64>)]| -> Result<f64> {
        let mut total = 0.0;
        for (e, x) in hist {
            total += mahalanobis2(&(&e.mean - x), &e.cov)?;
        }
        Ok(total / hist.len() as f64)
    };
    let mut records = Vec::with_capacity(cfg.steps);
    let (mut split_ok, mut naive_ok) = (0, 0);
    let mut last = (false, false, 0.0, 0.0);
    for (step, (truth, s, nv, w)) in run0.into_iter().enumerate() {
        let sc = consistency_audit(&split_hist[step])?.consistent;
        let nc = consistency_audit(&naive_hist[step])?.consistent;
        split_ok += usize::from(sc);
        naive_ok += usize::from(nc);
        let (ns, nn) = (mean_nees(&split_hist[step])?, mean_nees(&naive_hist[step])?);
        last = (sc, nc, ns, nn);
        let mut rec = TraceRecord::new((step + 1) as f64 * dt)
            .extra("naive_consistent", f64::from(u8::from(nc)))
            .extra("naive_covdiag_0", nv.cov[(0, 0)])
            .extra("naive_covdiag_1", nv.cov[(1, 1)])
            .extra("naive_est_0", nv.mean[0])
            .extra("naive_est_1", nv.mean[1])
            .extra("nees_naive", nn)
            .extra("nees_split", ns)
            .extra("split_consistent", f64::from(u8::from(sc)))
            .extra("split_w", w);
        rec.truth = vec_of(&truth);
        rec.estimate = vec_of(&s.mean);
        rec.cov_diag = vec_of(&s.cov_diag());
        records.push(rec);
    }
    let metrics = json!({
        "split_consistent_fraction": fraction(split_ok, cfg.steps),
        "naive_consistent_fraction": fraction(naive_ok, cfg.steps),
        "final_split_consistent": last.0,
        "final_naive_consistent": last.1,
        "final_mean_nees_split": last.2,
        "final_mean_nees_naive": last.3,
        "nodes": nodes,
        "runs": runs,
    });
    Ok(ScenarioOutput::ok(records, metrics))
}

fn circular_reasoning(cfg: &Config) -> Result<ScenarioOutput> {
    let rounds = cfg.count("rounds");
    let demo = circular_reasoning_demo::<f64>(rounds)?;
    let records = demo
        .naive
        .iter()
        .zip(&demo.ci)
        .enumerate()
        .map(|(r, (n, c))| {
            TraceRecord::new(r as f64)
                .extra("ci_divisor_a", c.0)
                .extra("ci_divisor_b", c.1)
                .extra("naive_divisor_a", n.0)
                .extra("naive_divisor_b", n.1)
        })
        .collect();
    let col = |v: &[(f64, f64)], first: bool| -> Vec<f64> { v.iter().map(|p| if first { p.0 } else { p.1 }).collect() };
    let metrics = json!({
        "rounds": rounds,
        "naive_divisors_a": col(&demo.naive, true),
        "naive_divisors_b": col(&demo.naive, false),
        "ci_divisors_a": col(&demo.ci, true),
        "ci_divisors_b": col(&demo.ci, false),
    });
    Ok(ScenarioOutput::ok(records, metrics))
}

fn phd_track(cfg: &Config, rng: &mut ChaCha8Rng) -> Result<ScenarioOutput> {
    let dt = cfg.dt;
    let a = DMatrix::from_row_slice(4, 4, &[1.0, 0.0, dt, 0.0, 0.0, 1.0, 0.0, dt, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let meas = LinearMeasurementModel::new(
        DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
        DMatrix::identity(2, 2) * cfg.param("meas_var"),
    )?;
    let mut pc = PhdConfig::new(a.clone(), DMatrix::identity(4, 4) * cfg.param("q"), meas)?;
    pc.p_detect = cfg.param("p_detect");
    pc.p_survive = cfg.param("p_survive");
    let (lo, hi) = ([-10.0, -10.0], [70.0, 60.0]);
    let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
    let clutter_rate = cfg.param("clutter_rate");
    pc.clutter_density = clutter_rate / area;
    // Two targets crossing halfway through a 50-step run.
    let starts = [[0.0, 0.0, 1.0, 1.0], [0.0, 50.0, 1.0, -1.0]];
    let birth_cov = DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 10.0, 4.0, 4.0]));
    let births = starts
        .iter()
        .map(|s| Component::new(cfg.param("birth_weight"), DVector::from_vec(vec![s[0], s[1], 0.0, 0.0]), birth_cov.clone()))
        .collect::<estkit::Result<_>>()?;
    pc.birth = GaussianMixture::intensity(births);
    pc.validate()?;
    let poisson = (clutter_rate > 0.0).then(|| Poisson::new(clutter_rate).expect("positive rate"));

    let mut truths: Vec<DVector<f64>> = starts.iter().map(|s| DVector::from_row_slice(s)).collect();
    let mut intensity = GaussianMixture::empty();
    let mut correct = 0;
    let mut records = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        if step > 0 {
            for x in &mut truths {
                *x = &a * &*x;
            }
        }
        let mut zs = Vec::new();
        for x in &truths {
            if rng.random::<f64>() < pc.p_detect {
                let sd = pc.measurement.sigma_z[(0, 0)].sqrt();
                zs.push(DVector::from_vec(vec![x[0] + sd * normal(rng), x[1] + sd * normal(rng)]));
            }
        }
        let n_clutter = poisson.as_ref().map_or(0, |p| p.sample(rng) as usize);
        for _ in 0..n_clutter {
            zs.push(DVector::from_vec(vec![rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])]));
        }
        let n_det = zs.len();
        let pred = phd_predict(&intensity, &pc);
        let upd = phd_update(&pred, &DetectionSet::new(zs, step as f64 * dt)?, &pc)?;
        intensity = phd_prune_merge(&upd, &pc);
        let n_est = phd_extract(&intensity).len();
        correct += usize::from(n_est == truths.len());
        let mut rec = TraceRecord::new(step as f64 * dt)
            .extra("components", intensity.len() as f64)
            .extra("detections", n_det as f64)
            .extra("mass", intensity.total_weight())
            .extra("n_est", n_est as f64)
            .extra("n_true", truths.len() as f64);
        rec.truth = truths.iter().flat_map(|x| [x[0], x[1]]).collect();
        records.push(rec);
    }
    let metrics = json!({
        "cardinality_accuracy": fraction(correct, cfg.steps),
        "targets": truths.len(),
    });
    Ok(ScenarioOutput::ok(records, metrics))
}

fn ukf_ckf_landmark(cfg: &Config, rng: &mut ChaCha8Rng) -> Result<ScenarioOutput> {
    let mut mp = params(cfg, &[("L", "L"), ("sigma_u", "sigma_u"), ("sigma_eps", "sigma_eps")]);
    mp.insert("dt".into(), cfg.dt);
    let sys = model_library::<f64>(ModelName::BicycleReduced, &mp)?.nonlinear().expect("nonlinear model").clone();
    let landmarks = [[15.0, 5.0], [-5.0, 15.0], [10.0, -10.0]];
    let sensors = landmarks
        .iter()
        .map(|l| {
            let p: BTreeMap<String, f64> =
                [("x_l".to_string(), l[0]), ("y_l".to_string(), l[1]), ("sigma_z".to_string(), cfg.param("range_var"))].into_iter().collect();
            model_library::<f64>(ModelName::LandmarkRange, &p).map(|m| m.measurement().expect("measurement model").clone())
        })
        .collect::<estkit::Result<Vec<_>>>()?;
    let u = DVector::from_vec(vec![cfg.param("speed"), cfg.param("steer")]);
    let (u_sd, eps_sd, range_sd) = (cfg.param("sigma_u").sqrt(), cfg.param("sigma_eps").sqrt(), cfg.param("range_var").sqrt());
    let init_var = cfg.param("init_var");
    let mut truth = DVector::zeros(3);
    let start = truth.map(|x: f64| x + init_var.sqrt() * normal(rng));
    let init = GaussianEstimate::new(start, DMatrix::identity(3, 3) * init_var)?;
    let names = ["ekf", "ukf", "ckf"];
    let mut ests = [init.clone(), init.clone(), init];
    let mut drops = [0usize; 3];
    let mut sq_err = [0.0; 3];
    let ukf_cfg = UkfConfig::default();
    let mut records = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let u_true = u.map(|x| x + u_sd * normal(rng));
        truth = (sys.g)(&truth, &u_true).map(|x| x + eps_sd * normal(rng));
        let meas = &sensors[(step - 1) % sensors.len()];
        let z = (meas.h)(&truth).map(|r| r + range_sd * normal(rng));

        let prior_ekf = ekf_predict(&ests[0], &sys, &u)?;
        let post_ekf = ekf_update(&prior_ekf, meas, &z)?;
        let pred_ukf = ukf_predict(&ests[1], &sys, &u, &ukf_cfg)?;
        let post_ukf = sigma_point_update(&pred_ukf, meas, &z)?;
        let pred_ckf = ckf_predict(&ests[2], &sys, &u)?;
        let post_ckf = sigma_point_update(&pred_ckf, meas, &z)?;
        let priors = [prior_ekf.cov.trace(), pred_ukf.estimate.cov.trace(), pred_ckf.estimate.cov.trace()];
        ests = [post_ekf, post_ukf, post_ckf];

        let mut rec = TraceRecord::new(step as f64 * cfg.dt);
        for (i, name) in names.iter().enumerate() {
            let dropped = ests[i].cov.trace() < priors[i];
            drops[i] += usize::from(dropped);
            let err = ((ests[i].mean[0] - truth[0]).powi(2) + (ests[i].mean[1] - truth[1]).powi(2)).sqrt();
            sq_err[i] += err * err;
            rec = rec.extra(&format!("{name}_err"), err).extra(&format!("{name}_trace_drop"), f64::from(u8::from(dropped)));
        }
        rec.truth = vec_of(&truth);
        rec.estimate = vec_of(&ests[1].mean);
        rec.cov_diag = vec_of(&ests[1].cov_diag());
        records.push(rec);
    }
    let mut metrics = Map::new();
    for (i, name) in names.iter().enumerate() {
        metrics.insert(
            name.to_string(),
            json!({
                "trace_reduction_fraction": fraction(drops[i], cfg.steps),
                "position_rmse": (sq_err[i] / cfg.steps as f64).sqrt(),
            }),
        );
    }
    Ok(ScenarioOutput { records, metrics, failure: None })
}
