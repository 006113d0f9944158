//! Interaction ProMP over the concatenated human (pose + EMG) and robot
//! state.
//!
//! Every channel carries its own block of `N` basis weights; the blocks are
//! stacked in layout order (pose, then EMG, then robot) into a single weight
//! vector whose joint Gaussian keeps the cross-channel covariance. That
//! cross-covariance is what lets a partial human observation move the robot
//! blocks when the model is conditioned.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::basis::{uniform_phases, BasisSystem};
use crate::data::Demonstration;
use crate::error::{Error, Result};
use crate::phase::PhasePrior;
use crate::promp::{weight_moments, CovFloor, DEFAULT_SIGMA_Y};

/// Variance added to every observed channel's noise so the innovation
/// covariance stays invertible.
pub const OBS_NOISE_FLOOR: f64 = 1e-8;

/// Current version of the model document format.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "human_pose")]
    HumanPose,
    #[serde(rename = "human_emg")]
    HumanEmg,
    #[serde(rename = "robot")]
    Robot,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::HumanPose => "human_pose",
            Role::HumanEmg => "human_emg",
            Role::Robot => "robot",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "human_pose" => Some(Role::HumanPose),
            "human_emg" => Some(Role::HumanEmg),
            "robot" => Some(Role::Robot),
            _ => None,
        }
    }

    pub fn is_human(self) -> bool {
        !matches!(self, Role::Robot)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ordered channel names with their roles: `p` pose channels, then `e` EMG
/// channels, then `j` robot channels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LayoutDoc", into = "LayoutDoc")]
pub struct ChannelLayout {
    names: Vec<String>,
    roles: Vec<Role>,
    p: usize,
    e: usize,
    j: usize,
}

#[derive(Serialize, Deserialize)]
struct LayoutDoc {
    names: Vec<String>,
    roles: Vec<Role>,
}

impl TryFrom<LayoutDoc> for ChannelLayout {
    type Error = Error;
    fn try_from(d: LayoutDoc) -> Result<Self> {
        if d.names.len() != d.roles.len() {
            return Err(Error::Schema("layout names and roles differ in length".into()));
        }
        let pick = |role| {
            d.names
                .iter()
                .zip(&d.roles)
                .filter(|(_, &r)| r == role)
                .map(|(n, _)| n.clone())
                .collect::<Vec<_>>()
        };
        let layout = ChannelLayout::new(pick(Role::HumanPose), pick(Role::HumanEmg), pick(Role::Robot))?;
        if layout.names != d.names {
            return Err(Error::Schema("layout channels are not ordered pose, EMG, robot".into()));
        }
        Ok(layout)
    }
}

impl From<ChannelLayout> for LayoutDoc {
    fn from(l: ChannelLayout) -> Self {
        LayoutDoc {
            names: l.names,
            roles: l.roles,
        }
    }
}

impl ChannelLayout {
    pub fn new(pose: Vec<String>, emg: Vec<String>, robot: Vec<String>) -> Result<Self> {
        if pose.is_empty() {
            return Err(Error::Schema("layout needs at least one human pose channel".into()));
        }
        if robot.is_empty() {
            return Err(Error::Schema("layout needs at least one robot channel".into()));
        }
        let (p, e, j) = (pose.len(), emg.len(), robot.len());
        let roles = std::iter::repeat_n(Role::HumanPose, p)
            .chain(std::iter::repeat_n(Role::HumanEmg, e))
            .chain(std::iter::repeat_n(Role::Robot, j))
            .collect();
        let names: Vec<String> = pose.into_iter().chain(emg).chain(robot).collect();
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(Error::Schema("empty channel name".into()));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::Schema(format!("duplicate channel name `{n}`")));
            }
        }
        Ok(Self { names, roles, p, e, j })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn e(&self) -> usize {
        self.e
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn role_of(&self, name: &str) -> Option<Role> {
        self.index_of(name).map(|i| self.roles[i])
    }

    pub fn human_names(&self) -> impl Iterator<Item = &str> {
        self.names[..self.p + self.e].iter().map(String::as_str)
    }

    pub fn names_with_role(&self, role: Role) -> impl Iterator<Item = &str> + '_ {
        self.names
            .iter()
            .zip(&self.roles)
            .filter(move |(_, &r)| r == role)
            .map(|(n, _)| n.as_str())
    }

    /// The same layout with the EMG block removed (the pose-only baseline).
    pub fn without_emg(&self) -> Self {
        let pick = |role| self.names_with_role(role).map(String::from).collect();
        ChannelLayout::new(pick(Role::HumanPose), Vec::new(), pick(Role::Robot))
            .expect("subset of a valid layout")
    }
}

/// Columns of `demo` reordered to the layout, one row per sample.
pub fn assemble_state(demo: &Demonstration, layout: &ChannelLayout) -> Result<DMatrix<f64>> {
    let columns = layout
        .names()
        .iter()
        .map(|name| {
            demo.channel(name)
                .map(|c| c.values.as_slice())
                .ok_or_else(|| Error::Schema(format!("demonstration is missing channel `{name}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(demo.len(), layout.len(), |t, c| columns[c][t]))
}

/// Parameters shared by every task model trained from demonstrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub basis: BasisSystem,
    pub ridge: f64,
    pub cov_floor: CovFloor,
    /// Observation-noise variance for channels without an override.
    pub sigma_y: f64,
    pub sigma_y_overrides: BTreeMap<String, f64>,
    pub sigma_alpha_floor: f64,
}

impl TrainConfig {
    pub fn new(basis: BasisSystem) -> Self {
        Self {
            basis,
            ridge: crate::basis::DEFAULT_RIDGE,
            cov_floor: CovFloor::Auto,
            sigma_y: DEFAULT_SIGMA_Y,
            sigma_y_overrides: BTreeMap::new(),
            sigma_alpha_floor: crate::phase::DEFAULT_SIGMA_ALPHA_FLOOR,
        }
    }

    fn sigma_y_for(&self, name: &str) -> f64 {
        self.sigma_y_overrides.get(name).copied().unwrap_or(self.sigma_y)
    }
}

/// Joint weight distribution of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionModel {
    pub layout: ChannelLayout,
    pub basis: BasisSystem,
    pub mu_w: DVector<f64>,
    pub sigma_w: DMatrix<f64>,
    /// Per-channel observation-noise variance, in layout order.
    pub sigma_y: Vec<f64>,
    pub phase_prior: PhasePrior,
    /// Nominal sample period; the nominal duration is `t_norm * sample_period`.
    pub sample_period: f64,
    /// Mean squared regression residual per channel over the training set.
    pub residual_variance: Vec<f64>,
    pub n_demos: usize,
}

/// Trains a task model from demonstrations already resampled to `t_norm`.
pub fn train_interaction(
    aligned: &[Demonstration],
    layout: &ChannelLayout,
    config: &TrainConfig,
    phase_prior: PhasePrior,
    sample_period: f64,
) -> Result<InteractionModel> {
    let first = aligned
        .first()
        .ok_or_else(|| Error::InvalidParameter("no demonstrations to train on".into()))?;
    let reference: BTreeSet<&str> = first.names().collect();
    let basis = &config.basis;
    let n = basis.n_basis();
    let mut weights = Vec::with_capacity(aligned.len());
    let mut residuals = vec![0.0; layout.len()];

    for demo in aligned {
        let names: BTreeSet<&str> = demo.names().collect();
        if names != reference {
            return Err(Error::Schema(format!(
                "inconsistent channel sets across demonstrations: {:?} vs {:?}",
                reference, names
            )));
        }
        if demo.len() != basis.t_norm() {
            return Err(Error::InvalidParameter(format!(
                "demonstration has {} samples but t_norm is {}; resample first",
                demo.len(),
                basis.t_norm()
            )));
        }
        let state = assemble_state(demo, layout)?;
        let mut w = DVector::zeros(layout.len() * n);
        for (c, residual) in residuals.iter_mut().enumerate() {
            let column: Vec<f64> = state.column(c).iter().copied().collect();
            let wc = basis.fit_weights(&column, config.ridge)?;
            *residual += basis.residual_variance(&column, &wc);
            w.rows_mut(c * n, n).copy_from(&wc);
        }
        weights.push(w);
    }

    let (mu_w, sigma_w) = weight_moments(&weights, config.cov_floor)?;
    let count = aligned.len() as f64;
    residuals.iter_mut().for_each(|r| *r /= count);
    let sigma_y = layout.names().iter().map(|n| config.sigma_y_for(n)).collect::<Vec<_>>();
    if let Some(bad) = sigma_y.iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::InvalidParameter(format!("sigma_y must be positive, got {bad}")));
    }
    if !(sample_period > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sample period must be positive, got {sample_period}"
        )));
    }
    Ok(InteractionModel {
        layout: layout.clone(),
        basis: basis.clone(),
        mu_w,
        sigma_w,
        sigma_y,
        phase_prior,
        sample_period,
        residual_variance: residuals,
        n_demos: aligned.len(),
    })
}

/// One observation instant: raw time since the start of the episode and the
/// values seen on some human channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSample {
    pub time: f64,
    pub values: BTreeMap<String, f64>,
}

/// A sparse prefix of human observations with per-channel noise variances.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PartialObservation {
    samples: Vec<ObservedSample>,
    noise: BTreeMap<String, f64>,
    raw_duration_so_far: f64,
}

impl PartialObservation {
    pub fn new(
        samples: Vec<ObservedSample>,
        noise: BTreeMap<String, f64>,
        raw_duration_so_far: f64,
    ) -> Result<Self> {
        for pair in samples.windows(2) {
            if !(pair[1].time > pair[0].time) {
                return Err(Error::InvalidParameter(format!(
                    "observation times must be strictly increasing ({} then {})",
                    pair[0].time, pair[1].time
                )));
            }
        }
        if let Some(s) = samples.iter().find(|s| !(s.time >= 0.0) || s.values.values().any(|v| !v.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "observation at time {} has a negative time or non-finite value",
                s.time
            )));
        }
        if let Some((name, v)) = noise.iter().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "noise variance for `{name}` must be positive, got {v}"
            )));
        }
        Ok(Self {
            samples,
            noise,
            raw_duration_so_far,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn samples(&self) -> &[ObservedSample] {
        &self.samples
    }

    pub fn noise(&self) -> &BTreeMap<String, f64> {
        &self.noise
    }

    pub fn raw_duration_so_far(&self) -> f64 {
        self.raw_duration_so_far
    }

    /// Total number of scalar measurements.
    pub fn scalar_count(&self) -> usize {
        self.samples.iter().map(|s| s.values.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.scalar_count() == 0
    }

    pub fn channel_names(&self) -> BTreeSet<&str> {
        self.samples
            .iter()
            .flat_map(|s| s.values.keys().map(String::as_str))
            .collect()
    }

    /// Joins two observations on the same episode clock.
    pub fn concat(&self, later: &PartialObservation) -> Result<PartialObservation> {
        let mut samples = self.samples.clone();
        samples.extend(later.samples.iter().cloned());
        let mut noise = self.noise.clone();
        noise.extend(later.noise.iter().map(|(k, v)| (k.clone(), *v)));
        PartialObservation::new(
            samples,
            noise,
            self.raw_duration_so_far.max(later.raw_duration_so_far),
        )
    }
}

/// Dense observation matrix: one block of `p + e + j` rows per timestep,
/// observed human channels carry their basis row, everything else is zero.
pub fn observation_matrix(
    basis: &BasisSystem,
    layout: &ChannelLayout,
    observed: &[(f64, BTreeSet<String>)],
) -> Result<DMatrix<f64>> {
    let (c, n) = (layout.len(), basis.n_basis());
    let mut h = DMatrix::zeros(observed.len() * c, c * n);
    for (t, (phase, channels)) in observed.iter().enumerate() {
        let row = basis.row(*phase)?;
        for name in channels {
            let idx = layout
                .index_of(name)
                .ok_or_else(|| Error::Schema(format!("unknown channel `{name}`")))?;
            if layout.roles()[idx].is_human() {
                h.view_mut((t * c + idx, idx * n), (1, n)).copy_from(&row.transpose());
            }
        }
    }
    Ok(h)
}

/// Compact form of the observation matrix restricted to observed rows.
///
/// Rows are ordered time-major, then by layout order within a timestep.
/// Each observed channel keeps the basis rows at its own observation phases,
/// which is all the block-diagonal structure needs.
#[derive(Debug, Clone)]
pub struct ObservationOperator {
    blocks: Vec<ChannelBlock>,
    rows: usize,
    n_basis: usize,
    values: DVector<f64>,
    noise: DVector<f64>,
}

#[derive(Debug, Clone)]
struct ChannelBlock {
    channel: usize,
    rows: Vec<usize>,
    psi: DMatrix<f64>,
}

impl ObservationOperator {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn noise(&self) -> &DVector<f64> {
        &self.noise
    }

    /// `H mu`.
    pub fn apply(&self, mu: &DVector<f64>) -> DVector<f64> {
        let n = self.n_basis;
        let mut out = DVector::zeros(self.rows);
        for b in &self.blocks {
            let part = &b.psi * mu.rows(b.channel * n, n);
            for (k, &r) in b.rows.iter().enumerate() {
                out[r] = part[k];
            }
        }
        out
    }

    /// `H Sigma` (rows x D).
    pub fn times(&self, sigma: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n_basis;
        let mut out = DMatrix::zeros(self.rows, sigma.ncols());
        for b in &self.blocks {
            let part = &b.psi * sigma.rows(b.channel * n, n);
            for (k, &r) in b.rows.iter().enumerate() {
                out.set_row(r, &part.row(k));
            }
        }
        out
    }

    /// `H Sigma H^T + R`, touching only the observed weight blocks.
    pub fn marginal_covariance(&self, sigma: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n_basis;
        let mut s = DMatrix::from_diagonal(&self.noise);
        for bi in &self.blocks {
            for bj in &self.blocks {
                let cross = sigma.view((bi.channel * n, bj.channel * n), (n, n));
                let block = &bi.psi * cross * bj.psi.transpose();
                for (a, &ra) in bi.rows.iter().enumerate() {
                    for (b, &rb) in bj.rows.iter().enumerate() {
                        s[(ra, rb)] += block[(a, b)];
                    }
                }
            }
        }
        s
    }

    /// Expands to the dense `rows x D` matrix (tests and diagnostics).
    pub fn to_dense(&self, dim: usize) -> DMatrix<f64> {
        let n = self.n_basis;
        let mut h = DMatrix::zeros(self.rows, dim);
        for b in &self.blocks {
            for (k, &r) in b.rows.iter().enumerate() {
                h.view_mut((r, b.channel * n), (1, n)).copy_from(&b.psi.row(k));
            }
        }
        h
    }
}

/// Gaussian log density of `residual` under the covariance factored by `chol`.
fn gaussian_log_density(chol: &Cholesky<f64, Dyn>, residual: &DVector<f64>) -> f64 {
    let l = chol.l_dirty();
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let z = l
        .solve_lower_triangular(residual)
        .expect("cholesky factor has a positive diagonal");
    let m = residual.len() as f64;
    -0.5 * (m * (2.0 * std::f64::consts::PI).ln() + log_det + z.norm_squared())
}

fn factor(s: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(s).ok_or_else(|| {
        Error::IllConditioned(format!("{what} is not positive definite; raise the observation noise"))
    })?;
    if chol.l_dirty().diagonal().iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::IllConditioned(format!("{what} has a degenerate factorization")));
    }
    Ok(chol)
}

/// Updated weight distribution after conditioning on observations.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorModel {
    pub mu_w: DVector<f64>,
    pub sigma_w: DMatrix<f64>,
    pub alpha_used: f64,
    /// Relative Frobenius asymmetry of the covariance before it was symmetrized.
    pub asymmetry: f64,
}

impl InteractionModel {
    pub fn dim(&self) -> usize {
        self.mu_w.len()
    }

    /// Nominal duration `t_norm * sample_period`.
    pub fn nominal_duration(&self) -> f64 {
        self.basis.t_norm() as f64 * self.sample_period
    }

    /// Maps a raw time since episode start onto model phase for a trajectory
    /// whose duration is `alpha` times the nominal one. The last sample of
    /// such a trajectory sits at `(alpha * t_norm - 1) * dt`, which maps to 1.
    pub fn phase_of(&self, time: f64, alpha: f64) -> f64 {
        let span = (alpha * self.basis.t_norm() as f64 - 1.0).max(f64::EPSILON) * self.sample_period;
        (time / span).clamp(0.0, 1.0)
    }

    /// Builds the compact observation operator for `obs` under scaling `alpha`.
    pub fn observation_operator(&self, obs: &PartialObservation, alpha: f64) -> Result<ObservationOperator> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        let c = self.layout.len();
        let mut rows_per_channel: Vec<Vec<usize>> = vec![Vec::new(); c];
        let mut phases_per_channel: Vec<Vec<f64>> = vec![Vec::new(); c];
        let mut values = Vec::new();
        let mut noise = Vec::new();
        // Resolve names once per distinct channel.
        let mut lookup: BTreeMap<&str, usize> = BTreeMap::new();
        for name in obs.channel_names() {
            let idx = self
                .layout
                .index_of(name)
                .ok_or_else(|| Error::Schema(format!("observed channel `{name}` is not in the model layout")))?;
            if !self.layout.roles()[idx].is_human() {
                return Err(Error::Schema(format!("robot channel `{name}` cannot be observed")));
            }
            lookup.insert(name, idx);
        }
        for sample in obs.samples() {
            let phase = self.phase_of(sample.time, alpha);
            let mut present: Vec<(usize, f64, &str)> = sample
                .values
                .iter()
                .map(|(name, &v)| (lookup[name.as_str()], v, name.as_str()))
                .collect();
            present.sort_by_key(|&(idx, _, _)| idx);
            for (idx, v, name) in present {
                rows_per_channel[idx].push(values.len());
                phases_per_channel[idx].push(phase);
                values.push(v);
                let var = obs.noise().get(name).copied().unwrap_or(self.sigma_y[idx]);
                noise.push(var + OBS_NOISE_FLOOR);
            }
        }
        let blocks = rows_per_channel
            .into_iter()
            .zip(&phases_per_channel)
            .enumerate()
            .filter(|(_, (rows, _))| !rows.is_empty())
            .map(|(i, (rows, phases))| ChannelBlock {
                channel: i,
                psi: self.basis.matrix_unchecked(phases),
                rows,
            })
            .collect();
        Ok(ObservationOperator {
            blocks,
            rows: values.len(),
            n_basis: self.basis.n_basis(),
            values: DVector::from_vec(values),
            noise: DVector::from_vec(noise),
        })
    }

    /// `log N(y; H mu, R + H Sigma H^T)` with `H` built at scaling `alpha`.
    /// An empty observation contributes `0`.
    pub fn log_marginal_likelihood(&self, obs: &PartialObservation, alpha: f64) -> Result<f64> {
        let op = self.observation_operator(obs, alpha)?;
        if op.rows() == 0 {
            return Ok(0.0);
        }
        let residual = op.values() - op.apply(&self.mu_w);
        let chol = factor(op.marginal_covariance(&self.sigma_w), "marginal observation covariance")?;
        Ok(gaussian_log_density(&chol, &residual))
    }

    /// Kalman update of the weight distribution on `obs` at scaling `alpha`.
    pub fn condition(&self, obs: &PartialObservation, alpha: f64) -> Result<PosteriorModel> {
        let op = self.observation_operator(obs, alpha)?;
        if op.rows() == 0 {
            return Ok(PosteriorModel {
                mu_w: self.mu_w.clone(),
                sigma_w: self.sigma_w.clone(),
                alpha_used: alpha,
                asymmetry: 0.0,
            });
        }
        let innovation = op.values() - op.apply(&self.mu_w);
        let h_sigma = op.times(&self.sigma_w);
        let chol = factor(op.marginal_covariance(&self.sigma_w), "innovation covariance")?;
        // gain^T = S^-1 H Sigma
        let gain_t = chol.solve(&h_sigma);
        let mu_w = &self.mu_w + gain_t.tr_mul(&innovation);
        let raw = &self.sigma_w - h_sigma.tr_mul(&gain_t);
        let scale = raw.norm().max(f64::MIN_POSITIVE);
        let asymmetry = (&raw - raw.transpose()).norm() / scale;
        let sigma_w = (&raw + raw.transpose()) * 0.5;
        Ok(PosteriorModel {
            mu_w,
            sigma_w,
            alpha_used: alpha,
            asymmetry,
        })
    }

    /// The unconditioned weight distribution at the prior mean scaling.
    pub fn prior_posterior(&self) -> PosteriorModel {
        PosteriorModel {
            mu_w: self.mu_w.clone(),
            sigma_w: self.sigma_w.clone(),
            alpha_used: self.phase_prior.mu_alpha,
            asymmetry: 0.0,
        }
    }

    /// A model with the same layout whose weight distribution is `posterior`,
    /// for chaining conditioning steps.
    pub fn with_posterior(&self, posterior: &PosteriorModel) -> InteractionModel {
        InteractionModel {
            mu_w: posterior.mu_w.clone(),
            sigma_w: posterior.sigma_w.clone(),
            ..self.clone()
        }
    }

    /// Mean and variance readout of every channel at `t_out` evenly spaced
    /// phases.
    pub fn predict_trajectory(&self, posterior: &PosteriorModel, t_out: usize) -> Result<Prediction> {
        if t_out < 2 {
            return Err(Error::InvalidParameter(format!("t_out must be at least 2, got {t_out}")));
        }
        if posterior.mu_w.len() != self.dim() || posterior.sigma_w.shape() != (self.dim(), self.dim()) {
            return Err(Error::InvalidParameter("posterior does not match the model dimension".into()));
        }
        let n = self.basis.n_basis();
        let c = self.layout.len();
        let phases = uniform_phases(t_out);
        let psi = self.basis.matrix_unchecked(&phases);
        let mut mean = DMatrix::zeros(t_out, c);
        let mut variance = DMatrix::zeros(t_out, c);
        for ch in 0..c {
            let mu = posterior.mu_w.rows(ch * n, n);
            let sigma = posterior.sigma_w.view((ch * n, ch * n), (n, n));
            mean.set_column(ch, &(&psi * mu));
            let ps = &psi * sigma;
            for t in 0..t_out {
                variance[(t, ch)] = ps.row(t).dot(&psi.row(t)) + self.sigma_y[ch];
            }
        }
        let alpha = posterior.alpha_used;
        let span = (alpha * self.basis.t_norm() as f64 - 1.0).max(0.0) * self.sample_period;
        let times = phases.iter().map(|p| p * span).collect();
        Ok(Prediction {
            layout: self.layout.clone(),
            times,
            phases,
            mean,
            variance,
            duration: alpha * self.nominal_duration(),
        })
    }

    /// Serializable snapshot.
    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            layout: self.layout.clone(),
            basis: self.basis.clone(),
            sample_period: self.sample_period,
            n_demos: self.n_demos,
            mu_w: self.mu_w.iter().copied().collect(),
            sigma_w: (0..self.dim())
                .map(|r| self.sigma_w.row(r).iter().copied().collect())
                .collect(),
            sigma_y: self.sigma_y.clone(),
            residual_variance: self.residual_variance.clone(),
            phase_prior: self.phase_prior,
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self> {
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        let dim = doc.layout.len() * doc.basis.n_basis();
        if doc.mu_w.len() != dim {
            return Err(Error::Schema(format!("mu_w has {} entries, expected {dim}", doc.mu_w.len())));
        }
        if doc.sigma_w.len() != dim || doc.sigma_w.iter().any(|r| r.len() != dim) {
            return Err(Error::Schema(format!("sigma_w must be {dim} x {dim}")));
        }
        if doc.sigma_y.len() != doc.layout.len() || doc.residual_variance.len() != doc.layout.len() {
            return Err(Error::Schema("per-channel vectors do not match the layout".into()));
        }
        let sigma_w = DMatrix::from_fn(dim, dim, |r, c| doc.sigma_w[r][c]);
        let asym = (&sigma_w - sigma_w.transpose()).abs().max();
        if asym > 1e-10 * sigma_w.abs().max().max(1.0) {
            return Err(Error::Schema("sigma_w is not symmetric".into()));
        }
        doc.phase_prior.validate()?;
        Ok(InteractionModel {
            layout: doc.layout,
            basis: doc.basis,
            mu_w: DVector::from_vec(doc.mu_w),
            sigma_w,
            sigma_y: doc.sigma_y,
            phase_prior: doc.phase_prior,
            sample_period: doc.sample_period,
            residual_variance: doc.residual_variance,
            n_demos: doc.n_demos,
        })
    }
}

/// On-disk form of an [`InteractionModel`]; `sigma_w` is stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub layout: ChannelLayout,
    pub basis: BasisSystem,
    pub sample_period: f64,
    pub n_demos: usize,
    pub mu_w: Vec<f64>,
    pub sigma_w: Vec<Vec<f64>>,
    pub sigma_y: Vec<f64>,
    pub residual_variance: Vec<f64>,
    pub phase_prior: PhasePrior,
}

/// Predicted mean and variance per channel on an output time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub layout: ChannelLayout,
    /// Raw times of the output samples.
    pub times: Vec<f64>,
    pub phases: Vec<f64>,
    /// `t_out x channels`.
    pub mean: DMatrix<f64>,
    pub variance: DMatrix<f64>,
    /// Raw duration `alpha * t_norm * sample_period`.
    pub duration: f64,
}
