//! Gaussian radial basis functions over normalized phase and per-channel
//! weight regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of basis functions per channel.
pub const DEFAULT_N_BASIS: usize = 20;
/// Default ridge added to the normal equations.
pub const DEFAULT_RIDGE: f64 = 1e-6;

/// `n_basis` Gaussians with evenly spaced centers on `[0, 1]`.
///
/// `bandwidth` is the variance of each Gaussian in phase units, so entry `i`
/// of a row is `exp(-(phase - c_i)^2 / (2 * bandwidth))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisParams", into = "BasisParams")]
pub struct BasisSystem {
    n_basis: usize,
    centers: Vec<f64>,
    bandwidth: f64,
    normalized: bool,
    t_norm: usize,
}

#[derive(Serialize, Deserialize)]
struct BasisParams {
    n_basis: usize,
    bandwidth: f64,
    normalized: bool,
    t_norm: usize,
}

impl TryFrom<BasisParams> for BasisSystem {
    type Error = Error;

    fn try_from(p: BasisParams) -> Result<Self> {
        BasisSystem::new(p.n_basis, p.bandwidth, p.t_norm, p.normalized)
    }
}

impl From<BasisSystem> for BasisParams {
    fn from(b: BasisSystem) -> Self {
        BasisParams {
            n_basis: b.n_basis,
            bandwidth: b.bandwidth,
            normalized: b.normalized,
            t_norm: b.t_norm,
        }
    }
}

/// Bandwidth that lets neighbouring Gaussians overlap: twice the squared
/// center spacing.
pub fn default_bandwidth(n_basis: usize) -> f64 {
    let spacing = 1.0 / (n_basis.max(2) - 1) as f64;
    2.0 * spacing * spacing
}

impl BasisSystem {
    /// Builds a basis system (`make_basis`).
    pub fn new(n_basis: usize, bandwidth: f64, t_norm: usize, normalized: bool) -> Result<Self> {
        if n_basis < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_basis must be at least 2, got {n_basis}"
            )));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        if t_norm < n_basis {
            return Err(Error::InvalidParameter(format!(
                "t_norm ({t_norm}) must be at least n_basis ({n_basis})"
            )));
        }
        let last = (n_basis - 1) as f64;
        let centers = (0..n_basis).map(|i| i as f64 / last).collect();
        Ok(Self {
            n_basis,
            centers,
            bandwidth,
            normalized,
            t_norm,
        })
    }

    /// Normalized basis with the default bandwidth for `n_basis`.
    pub fn with_defaults(n_basis: usize, t_norm: usize) -> Result<Self> {
        Self::new(n_basis, default_bandwidth(n_basis), t_norm, true)
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn t_norm(&self) -> usize {
        self.t_norm
    }

    /// The `t_norm` phases of an aligned trajectory, `k / (t_norm - 1)`.
    pub fn nominal_phases(&self) -> Vec<f64> {
        uniform_phases(self.t_norm)
    }

    /// Basis activations at one phase.
    pub fn row(&self, phase: f64) -> Result<DVector<f64>> {
        check_phase(phase)?;
        Ok(self.row_unchecked(phase))
    }

    pub(crate) fn row_unchecked(&self, phase: f64) -> DVector<f64> {
        let denom = 2.0 * self.bandwidth;
        let mut row = DVector::from_iterator(
            self.n_basis,
            self.centers.iter().map(|c| (-(phase - c).powi(2) / denom).exp()),
        );
        if self.normalized {
            let sum = row.sum();
            row /= sum;
        }
        row
    }

    /// Stacks `row(t)` for each timestamp into a `T x N` matrix.
    pub fn matrix(&self, phases: &[f64]) -> Result<DMatrix<f64>> {
        if phases.is_empty() {
            return Err(Error::InvalidParameter(
                "basis matrix needs at least one timestamp".into(),
            ));
        }
        for &p in phases {
            check_phase(p)?;
        }
        Ok(self.matrix_unchecked(phases))
    }

    pub(crate) fn matrix_unchecked(&self, phases: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(phases.len(), self.n_basis);
        for (t, &p) in phases.iter().enumerate() {
            m.set_row(t, &self.row_unchecked(p).transpose());
        }
        m
    }

    /// Ridge-regularized least squares `(Psi^T Psi + ridge I)^-1 Psi^T y`
    /// for a trajectory sampled on the nominal phase grid.
    pub fn fit_weights(&self, trajectory: &[f64], ridge: f64) -> Result<DVector<f64>> {
        let phases = uniform_phases(trajectory.len());
        self.fit_weights_at(&phases, trajectory, ridge)
    }

    /// As [`fit_weights`](Self::fit_weights) with explicit sample phases.
    pub fn fit_weights_at(&self, phases: &[f64], trajectory: &[f64], ridge: f64) -> Result<DVector<f64>> {
        if phases.len() != trajectory.len() {
            return Err(Error::InvalidParameter(format!(
                "{} phases for {} samples",
                phases.len(),
                trajectory.len()
            )));
        }
        if !(ridge >= 0.0) {
            return Err(Error::InvalidParameter(format!("ridge must be nonnegative, got {ridge}")));
        }
        if trajectory.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("trajectory contains non-finite values".into()));
        }
        if ridge == 0.0 && trajectory.len() < self.n_basis {
            return Err(Error::IllConditioned(format!(
                "{} samples cannot determine {} weights without ridge > 0",
                trajectory.len(),
                self.n_basis
            )));
        }
        let psi = self.matrix(phases)?;
        let y = DVector::from_column_slice(trajectory);
        let mut normal = psi.tr_mul(&psi);
        for i in 0..self.n_basis {
            normal[(i, i)] += ridge;
        }
        let rhs = psi.tr_mul(&y);
        let chol = normal.cholesky().ok_or_else(|| {
            Error::IllConditioned("normal matrix is singular; use ridge > 0".into())
        })?;
        // Cholesky succeeds on numerically rank-deficient matrices with tiny pivots.
        let pivots = chol.l_dirty().diagonal();
        let (lo, hi) = (pivots.min(), pivots.max());
        if lo * lo <= 1e-14 * hi * hi {
            return Err(Error::IllConditioned(
                "normal matrix is numerically singular; use ridge > 0".into(),
            ));
        }
        let w = chol.solve(&rhs);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::IllConditioned("weight solve produced non-finite values; use ridge > 0".into()));
        }
        Ok(w)
    }

    /// Mean squared residual of `Psi w` against the trajectory.
    pub fn residual_variance(&self, trajectory: &[f64], weights: &DVector<f64>) -> f64 {
        let phases = uniform_phases(trajectory.len());
        let psi = self.matrix_unchecked(&phases);
        let fitted = psi * weights;
        let n = trajectory.len() as f64;
        fitted
            .iter()
            .zip(trajectory)
            .map(|(f, y)| (f - y).powi(2))
            .sum::<f64>()
            / n
    }
}

/// `n` evenly spaced phases covering `[0, 1]` inclusive.
pub fn uniform_phases(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let last = (n - 1) as f64;
            (0..n).map(|k| k as f64 / last).collect()
        }
    }
}

fn check_phase(phase: f64) -> Result<()> {
    if (0.0..=1.0).contains(&phase) {
        Ok(())
    } else {
        Err(Error::Domain(format!("phase {phase} outside [0, 1]")))
    }
}
