//! Random small models and an independent dense Gaussian-conditioning oracle.
#![allow(dead_code)]

use std::collections::BTreeMap;

use ipromp::interaction::OBS_NOISE_FLOOR;
use ipromp::{BasisSystem, ChannelLayout, InteractionModel, ObservedSample, PartialObservation, PhasePrior, Role};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn layout(p: usize, e: usize, j: usize) -> ChannelLayout {
    let names = |prefix: &str, k: usize| (0..k).map(|i| format!("{prefix}{i}")).collect();
    ChannelLayout::new(names("pose", p), names("emg", e), names("joint", j)).unwrap()
}

pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, ridge: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * ridge
}

/// A model with random mean and covariance; `t_norm = 10`, `dt = 0.1`.
pub fn random_model(rng: &mut ChaCha8Rng, n: usize, layout: ChannelLayout) -> InteractionModel {
    let basis = BasisSystem::with_defaults(n, 10).unwrap();
    let d = layout.len() * n;
    InteractionModel {
        basis,
        mu_w: DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)),
        sigma_w: random_spd(rng, d, 0.1),
        sigma_y: (0..layout.len()).map(|_| rng.random_range(0.01..0.5)).collect(),
        phase_prior: PhasePrior {
            mu_alpha: 1.0,
            sigma_alpha: 0.1,
        },
        sample_period: 0.1,
        residual_variance: vec![0.0; layout.len()],
        n_demos: 1,
        layout,
    }
}

/// Up to `max_samples` instants in `[0, 1)` seconds, each observing a random
/// nonempty subset of human channels. Some channels get explicit noise.
pub fn random_observation(rng: &mut ChaCha8Rng, layout: &ChannelLayout, max_samples: usize) -> PartialObservation {
    let human: Vec<String> = layout.human_names().map(String::from).collect();
    let s = rng.random_range(1..=max_samples);
    let mut time = 0.0;
    let mut samples = Vec::with_capacity(s);
    for _ in 0..s {
        time += rng.random_range(0.01..0.2);
        let mut values = BTreeMap::new();
        for name in &human {
            if rng.random_bool(0.7) {
                values.insert(name.clone(), rng.random_range(-2.0..2.0));
            }
        }
        if values.is_empty() {
            values.insert(human[0].clone(), rng.random_range(-2.0..2.0));
        }
        samples.push(ObservedSample { time, values });
    }
    let mut noise = BTreeMap::new();
    for name in &human {
        if rng.random_bool(0.5) {
            noise.insert(name.clone(), rng.random_range(0.01..1.0));
        }
    }
    PartialObservation::new(samples, noise, time).unwrap()
}

/// Dense `H`, `y` and diagonal `R` for the observed rows, in time-major and
/// layout order.
pub fn dense_system(
    model: &InteractionModel,
    obs: &PartialObservation,
    alpha: f64,
) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let n = model.basis.n_basis();
    let names = model.layout.names();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let (mut y, mut r) = (Vec::new(), Vec::new());
    for sample in obs.samples() {
        let phase = model.phase_of(sample.time, alpha);
        let psi = model.basis.row(phase).unwrap();
        for (c, name) in names.iter().enumerate() {
            let Some(v) = sample.values.get(name) else { continue };
            assert_ne!(model.layout.roles()[c], Role::Robot);
            let mut row = DVector::zeros(model.dim());
            row.rows_mut(c * n, n).copy_from(&psi);
            rows.push(row);
            y.push(*v);
            r.push(obs.noise().get(name).copied().unwrap_or(model.sigma_y[c]) + OBS_NOISE_FLOOR);
        }
    }
    let h = DMatrix::from_fn(rows.len(), model.dim(), |i, k| rows[i][k]);
    (h, DVector::from_vec(y), DVector::from_vec(r))
}

/// Posterior by the information form: `(Σ⁻¹ + HᵀR⁻¹H)⁻¹` with explicit inverses.
pub fn dense_condition(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    r: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let sigma_inv = sigma.clone().try_inverse().unwrap();
    let r_inv = DMatrix::from_diagonal(&r.map(|v| 1.0 / v));
    let precision = &sigma_inv + h.transpose() * &r_inv * h;
    let cov = precision.try_inverse().unwrap();
    let mean = &cov * (&sigma_inv * mu + h.transpose() * &r_inv * y);
    (mean, cov)
}

/// `log N(y; Hμ, HΣHᵀ + R)` via determinant and explicit inverse.
pub fn dense_log_likelihood(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    r: &DVector<f64>,
) -> f64 {
    let s = h * sigma * h.transpose() + DMatrix::from_diagonal(r);
    let d = y - h * mu;
    let quad = (d.transpose() * s.clone().try_inverse().unwrap() * &d)[(0, 0)];
    -0.5 * (quad + s.determinant().ln() + y.len() as f64 * (2.0 * std::f64::consts::PI).ln())
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// A model with structured random mean, `t_norm = 100`, `dt = 0.01`, small
/// weight covariance and prior `N(1, sigma_alpha)`.
pub fn phase_model(rng: &mut ChaCha8Rng, sigma_alpha: f64) -> InteractionModel {
    let mut model = random_model(rng, 2, layout(2, 0, 1));
    let basis = BasisSystem::with_defaults(10, 100).unwrap();
    let d = model.layout.len() * 10;
    model.basis = basis;
    model.mu_w = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    model.sigma_w = DMatrix::identity(d, d) * 1e-3;
    model.sigma_y = vec![1e-4; model.layout.len()];
    model.sample_period = 0.01;
    model.phase_prior = PhasePrior {
        mu_alpha: 1.0,
        sigma_alpha,
    };
    model
}

/// The first `fraction` of the human mean trajectory played back `alpha`
/// times slower than nominal, sampled at the model period.
pub fn stretched_mean_observation(model: &InteractionModel, alpha: f64, fraction: f64) -> PartialObservation {
    let n = model.basis.n_basis();
    let len = (alpha * model.basis.t_norm() as f64).round() as usize;
    let keep = ((fraction * len as f64).floor() as usize).max(1);
    let samples = (0..keep)
        .map(|k| {
            let psi = model.basis.row(k as f64 / (len - 1) as f64).unwrap();
            let values = model
                .layout
                .names()
                .iter()
                .enumerate()
                .filter(|(c, _)| model.layout.roles()[*c].is_human())
                .map(|(c, name)| (name.clone(), psi.dot(&model.mu_w.rows(c * n, n))))
                .collect();
            ObservedSample {
                time: k as f64 * model.sample_period,
                values,
            }
        })
        .collect();
    PartialObservation::new(samples, BTreeMap::new(), keep as f64 * model.sample_period).unwrap()
}
