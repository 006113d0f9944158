//! Single-channel ProMP: a Gaussian over basis weights fitted by moment
//! matching, and the position marginal it induces.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::BasisSystem;
use crate::error::{Error, Result};

/// Default observation-noise variance in normalized signal units.
pub const DEFAULT_SIGMA_Y: f64 = 1e-4;

/// Diagonal loading added to the sample covariance of weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum CovFloor {
    /// `1e-6` times the mean diagonal magnitude, or `1e-6` when that is zero.
    #[default]
    Auto,
    Fixed(f64),
}

impl CovFloor {
    pub fn resolve(self, cov: &DMatrix<f64>) -> Result<f64> {
        match self {
            CovFloor::Fixed(v) if v >= 0.0 && v.is_finite() => Ok(v),
            CovFloor::Fixed(v) => Err(Error::InvalidParameter(format!(
                "covariance floor must be nonnegative, got {v}"
            ))),
            CovFloor::Auto => {
                let n = cov.nrows().max(1) as f64;
                let mean_diag = cov.diagonal().iter().map(|d| d.abs()).sum::<f64>() / n;
                Ok(if mean_diag > 0.0 { 1e-6 * mean_diag } else { 1e-6 })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrompParams {
    pub mu_w: DVector<f64>,
    pub sigma_w: DMatrix<f64>,
    pub sigma_y: f64,
}

/// Sample mean and Bessel-corrected covariance of the rows of `samples`
/// (zero covariance for a single sample), plus the covariance floor.
pub(crate) fn weight_moments(
    samples: &[DVector<f64>],
    floor: CovFloor,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidParameter("no weight vectors to train on".into()))?;
    let dim = first.len();
    if samples.iter().any(|w| w.len() != dim) {
        return Err(Error::InvalidParameter("weight vectors differ in length".into()));
    }
    let n = samples.len() as f64;
    let mut mean = DVector::zeros(dim);
    for w in samples {
        mean += w;
    }
    mean /= n;

    let mut cov = DMatrix::zeros(dim, dim);
    if samples.len() > 1 {
        let centered = DMatrix::from_fn(dim, samples.len(), |r, c| samples[c][r] - mean[r]);
        cov = &centered * centered.transpose() / (n - 1.0);
        cov = (&cov + cov.transpose()) * 0.5;
    }
    let f = floor.resolve(&cov)?;
    for i in 0..dim {
        cov[(i, i)] += f;
    }
    Ok((mean, cov))
}

pub fn train_promp(weights: &[DVector<f64>], sigma_y: f64, cov_floor: CovFloor) -> Result<PrompParams> {
    if !(sigma_y > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma_y must be positive, got {sigma_y}")));
    }
    let (mu_w, sigma_w) = weight_moments(weights, cov_floor)?;
    Ok(PrompParams {
        mu_w,
        sigma_w,
        sigma_y,
    })
}

impl PrompParams {
    /// Mean and variance of the position at `phase`:
    /// `(psi^T mu, psi^T Sigma psi + sigma_y)`.
    pub fn marginal_at(&self, basis: &BasisSystem, phase: f64) -> Result<(f64, f64)> {
        let psi = basis.row(phase)?;
        if psi.len() != self.mu_w.len() {
            return Err(Error::InvalidParameter(format!(
                "basis has {} functions but weights have {}",
                psi.len(),
                self.mu_w.len()
            )));
        }
        let mean = psi.dot(&self.mu_w);
        let var = (&self.sigma_w * &psi).dot(&psi) + self.sigma_y;
        Ok((mean, var))
    }
}
