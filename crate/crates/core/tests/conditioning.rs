mod common;

use std::collections::BTreeMap;

use common::*;
use ipromp::interaction::train_interaction;
use ipromp::{
    BasisSystem, Channel, CovFloor, Demonstration, ObservedSample, PartialObservation, PhasePrior, Role, TrainConfig,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[test]
fn kalman_update_matches_dense_information_form() {
    let mut rng = rng(1);
    for case in 0..40 {
        let n = rng.random_range(2..=3);
        let p = rng.random_range(1..=2);
        let e = rng.random_range(0..=4 - p - 1);
        let j = rng.random_range(1..=4 - p - e);
        let model = random_model(&mut rng, n, layout(p, e, j));
        let obs = random_observation(&mut rng, &model.layout, 5);
        let alpha = rng.random_range(0.7..1.3);

        let post = model.condition(&obs, alpha).unwrap();
        let (h, y, r) = dense_system(&model, &obs, alpha);
        let (mu, sigma) = dense_condition(&model.mu_w, &model.sigma_w, &h, &y, &r);
        assert!(rel_err_vec(&post.mu_w, &mu) <= 1e-8, "case {case} mean");
        assert!(rel_err_mat(&post.sigma_w, &sigma) <= 1e-8, "case {case} covariance");
        assert_eq!(post.alpha_used, alpha);

        let ll = model.log_marginal_likelihood(&obs, alpha).unwrap();
        let oracle = dense_log_likelihood(&model.mu_w, &model.sigma_w, &h, &y, &r);
        assert!((ll - oracle).abs() <= 1e-8 * oracle.abs().max(1.0), "case {case} likelihood");
    }
}

#[test]
fn compact_operator_matches_dense_matrix() {
    let mut rng = rng(2);
    let model = random_model(&mut rng, 3, layout(2, 1, 1));
    let obs = random_observation(&mut rng, &model.layout, 5);
    let op = model.observation_operator(&obs, 1.1).unwrap();
    let (h, y, r) = dense_system(&model, &obs, 1.1);
    assert_eq!(op.to_dense(model.dim()), h);
    assert_eq!(op.values(), &y);
    assert_eq!(op.noise(), &r);
}

/// A single observed channel at phase 0.5 under a two-function normalized
/// basis has `psi = (0.5, 0.5)`. With `Sigma = 1 1^T` the channel value is a
/// scalar `x ~ N(0, 1)`; observing `y = 1` with unit noise gives
/// `x | y ~ N(0.5, 0.5)`.
#[test]
fn scalar_conjugate_update() {
    let lay = layout(1, 0, 1);
    let mut sigma = DMatrix::identity(4, 4);
    sigma.view_mut((0, 0), (2, 2)).fill(1.0);
    let model = ipromp::InteractionModel {
        layout: lay,
        basis: BasisSystem::with_defaults(2, 10).unwrap(),
        mu_w: DVector::zeros(4),
        sigma_w: sigma,
        sigma_y: vec![1.0, 1.0],
        phase_prior: PhasePrior {
            mu_alpha: 1.0,
            sigma_alpha: 0.1,
        },
        sample_period: 0.1,
        residual_variance: vec![0.0; 2],
        n_demos: 1,
    };
    assert!((model.phase_of(0.45, 1.0) - 0.5).abs() < 1e-15);
    let obs = PartialObservation::new(
        vec![ObservedSample {
            time: 0.45,
            values: BTreeMap::from([("pose0".to_string(), 1.0)]),
        }],
        BTreeMap::from([("pose0".to_string(), 1.0)]),
        0.45,
    )
    .unwrap();
    let post = model.condition(&obs, 1.0).unwrap();
    let psi = DVector::from_vec(vec![0.5, 0.5]);
    let mean = psi.dot(&post.mu_w.rows(0, 2));
    let var = (psi.transpose() * post.sigma_w.view((0, 0), (2, 2)) * &psi)[(0, 0)];
    assert!((mean - 0.5).abs() < 1e-8, "{mean}");
    assert!((var - 0.5).abs() < 1e-8, "{var}");
    // The independent robot block is untouched.
    assert_eq!(post.sigma_w.view((2, 2), (2, 2)), DMatrix::<f64>::identity(2, 2));
}

fn observation_at_mean(model: &ipromp::InteractionModel, alpha: f64, times: &[f64]) -> PartialObservation {
    let n = model.basis.n_basis();
    let samples = times
        .iter()
        .map(|&time| {
            let psi = model.basis.row(model.phase_of(time, alpha)).unwrap();
            let values = model
                .layout
                .names()
                .iter()
                .enumerate()
                .filter(|(c, _)| model.layout.roles()[*c].is_human())
                .map(|(c, name)| (name.clone(), psi.dot(&model.mu_w.rows(c * n, n))))
                .collect();
            ObservedSample { time, values }
        })
        .collect();
    PartialObservation::new(samples, BTreeMap::new(), *times.last().unwrap()).unwrap()
}

#[test]
fn zero_innovation_keeps_the_mean() {
    let mut rng = rng(3);
    let model = random_model(&mut rng, 3, layout(2, 1, 1));
    let obs = observation_at_mean(&model, 1.0, &[0.1, 0.3, 0.5]);
    let post = model.condition(&obs, 1.0).unwrap();
    assert!(rel_err_vec(&post.mu_w, &model.mu_w) < 1e-12);
}

#[test]
fn huge_noise_leaves_the_prior() {
    let mut rng = rng(4);
    let model = random_model(&mut rng, 3, layout(1, 2, 1));
    let obs = random_observation(&mut rng, &model.layout, 5);
    let noise = model.layout.human_names().map(|n| (n.to_string(), 1e12)).collect();
    let obs = PartialObservation::new(obs.samples().to_vec(), noise, obs.raw_duration_so_far()).unwrap();
    let post = model.condition(&obs, 1.0).unwrap();
    assert!((&post.mu_w - &model.mu_w).norm() <= 1e-6 * model.mu_w.norm());
    assert!((&post.sigma_w - &model.sigma_w).norm() <= 1e-6 * model.sigma_w.norm());
}

#[test]
fn empty_observation_returns_the_prior() {
    let mut rng = rng(5);
    let model = random_model(&mut rng, 2, layout(1, 1, 1));
    let post = model.condition(&PartialObservation::empty(), 1.3).unwrap();
    assert_eq!(post.mu_w, model.mu_w);
    assert_eq!(post.sigma_w, model.sigma_w);
    assert_eq!(model.log_marginal_likelihood(&PartialObservation::empty(), 1.0).unwrap(), 0.0);
}

#[test]
fn robot_channels_cannot_be_observed() {
    let mut rng = rng(6);
    let model = random_model(&mut rng, 2, layout(1, 0, 1));
    let obs = PartialObservation::new(
        vec![ObservedSample {
            time: 0.1,
            values: BTreeMap::from([("joint0".to_string(), 1.0)]),
        }],
        BTreeMap::new(),
        0.1,
    )
    .unwrap();
    assert!(matches!(model.condition(&obs, 1.0), Err(ipromp::Error::Schema(_))));
}

#[test]
fn batch_equals_sequential_conditioning() {
    let mut rng = rng(7);
    for _ in 0..20 {
        let model = random_model(&mut rng, 3, layout(2, 1, 1));
        let a = random_observation(&mut rng, &model.layout, 3);
        let shift = a.samples().last().unwrap().time;
        let b = random_observation(&mut rng, &model.layout, 3);
        let b = PartialObservation::new(
            b.samples()
                .iter()
                .map(|s| ObservedSample {
                    time: s.time + shift,
                    values: s.values.clone(),
                })
                .collect(),
            a.noise().clone(),
            b.raw_duration_so_far() + shift,
        )
        .unwrap();
        let both = a.concat(&b).unwrap();
        let batch = model.condition(&both, 1.0).unwrap();
        let first = model.condition(&a, 1.0).unwrap();
        let seq = model.with_posterior(&first).condition(&b, 1.0).unwrap();
        assert!(rel_err_vec(&seq.mu_w, &batch.mu_w) <= 1e-10);
        assert!(rel_err_mat(&seq.sigma_w, &batch.sigma_w) <= 1e-10);
    }
}

#[test]
fn posterior_is_symmetric_and_contracts() {
    let mut rng = rng(8);
    for _ in 0..30 {
        let model = random_model(&mut rng, 3, layout(1, 1, 2));
        let obs = random_observation(&mut rng, &model.layout, 5);
        let post = model.condition(&obs, 1.0).unwrap();
        assert!(post.asymmetry <= 1e-9);
        assert_eq!(post.sigma_w, post.sigma_w.transpose());
        let scale = model.sigma_w.norm();
        assert!(min_eigenvalue(&post.sigma_w) >= -1e-10 * scale);
        assert!(min_eigenvalue(&(&model.sigma_w - &post.sigma_w)) >= -1e-8 * scale);
    }
}

#[test]
fn diagonal_marginal_likelihood_at_mean() {
    // Independent channels with a diagonal weight covariance and observations
    // at distinct channels keep the marginal covariance diagonal.
    let mut rng = rng(9);
    let mut model = random_model(&mut rng, 2, layout(2, 0, 1));
    model.sigma_w = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.7, 0.2, 0.9, 1.0, 1.0]));
    let n = 2;
    let phase = model.phase_of(0.2, 1.0);
    let psi = model.basis.row(phase).unwrap();
    let values: BTreeMap<String, f64> = (0..2)
        .map(|c| (format!("pose{c}"), psi.dot(&model.mu_w.rows(c * n, n))))
        .collect();
    let obs = PartialObservation::new(vec![ObservedSample { time: 0.2, values }], BTreeMap::new(), 0.2).unwrap();
    let diag: Vec<f64> = (0..2)
        .map(|c| {
            let s = model.sigma_w.view((c * n, c * n), (n, n));
            (psi.transpose() * s * &psi)[(0, 0)] + model.sigma_y[c] + ipromp::interaction::OBS_NOISE_FLOOR
        })
        .collect();
    let expected = -0.5 * (2.0 * (2.0 * std::f64::consts::PI).ln() + diag.iter().map(|d| d.ln()).sum::<f64>());
    let ll = model.log_marginal_likelihood(&obs, 1.0).unwrap();
    assert!((ll - expected).abs() < 1e-12, "{ll} vs {expected}");
}

fn demo(values: &[(&str, Role, Vec<f64>)]) -> Demonstration {
    Demonstration::new(
        values
            .iter()
            .map(|(n, r, v)| Channel {
                name: n.to_string(),
                role: *r,
                values: v.clone(),
            })
            .collect(),
        0.1,
        None,
    )
    .unwrap()
}

fn prior() -> PhasePrior {
    PhasePrior {
        mu_alpha: 1.0,
        sigma_alpha: 0.05,
    }
}

#[test]
fn linear_relation_propagates_to_cross_covariance() {
    let mut rng = rng(10);
    let t = 30;
    let demos: Vec<Demonstration> = (0..8)
        .map(|_| {
            let a = rng.random_range(-1.0..1.0);
            let b = rng.random_range(-1.0..1.0);
            let h: Vec<f64> = (0..t).map(|i| a * (i as f64 * 0.2).sin() + b).collect();
            let r: Vec<f64> = h.iter().map(|v| 2.0 * v).collect();
            demo(&[("pose0", Role::HumanPose, h), ("joint0", Role::Robot, r)])
        })
        .collect();
    let config = TrainConfig {
        cov_floor: CovFloor::Fixed(0.0),
        ..TrainConfig::new(BasisSystem::with_defaults(5, t).unwrap())
    };
    let model = train_interaction(&demos, &layout(1, 0, 1), &config, prior(), 0.1).unwrap();
    let hh = model.sigma_w.view((0, 0), (5, 5));
    let rh = model.sigma_w.view((5, 0), (5, 5));
    assert!((rh - hh * 2.0).norm() <= 1e-8 * hh.norm().max(1.0));
}

#[test]
fn single_demo_gives_floor_covariance_and_e0_dimension() {
    let t = 20;
    let d = demo(&[
        ("pose0", Role::HumanPose, (0..t).map(|i| i as f64).collect()),
        ("joint0", Role::Robot, vec![1.0; t]),
    ]);
    let config = TrainConfig::new(BasisSystem::with_defaults(4, t).unwrap());
    let model = train_interaction(&[d], &layout(1, 0, 1), &config, prior(), 0.1).unwrap();
    assert_eq!(model.dim(), 2 * 4);
    assert_eq!(model.sigma_w, DMatrix::identity(8, 8) * 1e-6);
}

#[test]
fn prior_prediction_reproduces_training_mean() {
    let mut rng = rng(11);
    let t = 40;
    let demos: Vec<Demonstration> = (0..5)
        .map(|_| {
            let a = rng.random_range(0.5..1.5);
            let h: Vec<f64> = (0..t).map(|i| a * (i as f64 / 8.0).cos()).collect();
            let r: Vec<f64> = h.iter().map(|v| v - 1.0).collect();
            demo(&[("pose0", Role::HumanPose, h), ("joint0", Role::Robot, r)])
        })
        .collect();
    let config = TrainConfig::new(BasisSystem::with_defaults(20, t).unwrap());
    let model = train_interaction(&demos, &layout(1, 0, 1), &config, prior(), 0.1).unwrap();
    let pred = model.predict_trajectory(&model.prior_posterior(), t).unwrap();
    // Largest pointwise residual of the per-demo fits.
    let psi = model.basis.matrix(&model.basis.nominal_phases()).unwrap();
    let mut tol: f64 = 1e-12;
    for d in &demos {
        for ch in d.channels() {
            let w = model.basis.fit_weights(&ch.values, config.ridge).unwrap();
            let fit = &psi * w;
            tol = ch.values.iter().zip(fit.iter()).map(|(a, b)| (a - b).abs()).fold(tol, f64::max);
        }
    }
    for i in 0..t {
        let mean_h: f64 = demos.iter().map(|d| d.channels()[0].values[i]).sum::<f64>() / 5.0;
        assert!((pred.mean[(i, 0)] - mean_h).abs() <= tol);
        assert!((pred.mean[(i, 1)] - (mean_h - 1.0)).abs() <= tol);
    }
    assert!((pred.duration - t as f64 * 0.1).abs() < 1e-12);

    let ends = model.predict_trajectory(&model.prior_posterior(), 2).unwrap();
    for (row, phase) in [(0, 0.0), (1, 1.0)] {
        let psi = model.basis.row(phase).unwrap();
        assert!((ends.mean[(row, 0)] - psi.dot(&model.mu_w.rows(0, 20))).abs() < 1e-12);
    }
    assert!(model.predict_trajectory(&model.prior_posterior(), 1).is_err());
}

#[test]
fn robot_prediction_matches_dense_conditional() {
    let mut rng = rng(12);
    let model = random_model(&mut rng, 3, layout(2, 1, 2));
    // Noiseless values generated from a weight draw.
    let w_star = DVector::from_fn(model.dim(), |_, _| rng.random_range(-1.0..1.0));
    let mut obs = observation_at_mean(&model.with_posterior(&ipromp::PosteriorModel {
        mu_w: w_star,
        sigma_w: model.sigma_w.clone(),
        alpha_used: 1.0,
        asymmetry: 0.0,
    }), 1.0, &[0.0, 0.2, 0.4, 0.6, 0.9]);
    let tiny = model.layout.human_names().map(|n| (n.to_string(), 1e-9)).collect();
    obs = PartialObservation::new(obs.samples().to_vec(), tiny, 0.9).unwrap();
    let post = model.condition(&obs, 1.0).unwrap();
    let (h, y, r) = dense_system(&model, &obs, 1.0);
    let (mu, _) = dense_condition(&model.mu_w, &model.sigma_w, &h, &y, &r);
    let pred = model.predict_trajectory(&post, 10).unwrap();
    let n = 3;
    for (i, phase) in pred.phases.iter().enumerate() {
        let psi = model.basis.row(*phase).unwrap();
        for c in 3..5 {
            let oracle = psi.dot(&mu.rows(c * n, n));
            assert!((pred.mean[(i, c)] - oracle).abs() <= 1e-6, "{} vs {oracle}", pred.mean[(i, c)]);
        }
    }
}

#[test]
fn model_document_round_trip_is_lossless() {
    let mut rng = rng(13);
    let model = random_model(&mut rng, 3, layout(1, 1, 1));
    let json = serde_json::to_string(&model.to_document()).unwrap();
    let back = ipromp::InteractionModel::from_document(serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(back, model);
}
