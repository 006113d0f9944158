//! Temporal scaling: a Gaussian prior over duration ratios and MAP search
//! for the ratio that best explains a partial observation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interaction::{InteractionModel, PartialObservation};

pub const DEFAULT_SIGMA_ALPHA_FLOOR: f64 = 0.05;
pub const DEFAULT_ALPHA_GRID: usize = 100;
/// Scalings below this map every observation to the end of the movement.
pub const MIN_ALPHA: f64 = 0.1;

/// `alpha ~ N(mu_alpha, sigma_alpha^2)`; `sigma_alpha` is a standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePrior {
    pub mu_alpha: f64,
    pub sigma_alpha: f64,
}

impl PhasePrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_alpha > 0.0 && self.mu_alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu_alpha must be positive, got {}", self.mu_alpha)));
        }
        if !(self.sigma_alpha > 0.0 && self.sigma_alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma_alpha must be positive, got {}",
                self.sigma_alpha
            )));
        }
        Ok(())
    }

    pub fn log_density(&self, alpha: f64) -> f64 {
        let z = (alpha - self.mu_alpha) / self.sigma_alpha;
        -0.5 * z * z - self.sigma_alpha.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    /// Uniform search grid on `[max(MIN_ALPHA, mu - 3 sigma), mu + 3 sigma]`.
    pub fn search_grid(&self, grid_points: usize) -> Result<Vec<f64>> {
        if grid_points < 3 {
            return Err(Error::InvalidParameter(format!(
                "alpha grid needs at least 3 points, got {grid_points}"
            )));
        }
        let lo = (self.mu_alpha - 3.0 * self.sigma_alpha).max(MIN_ALPHA);
        let hi = self.mu_alpha + 3.0 * self.sigma_alpha;
        let step = (hi - lo) / (grid_points - 1) as f64;
        Ok((0..grid_points).map(|i| lo + step * i as f64).collect())
    }
}

/// Fits the duration-ratio prior: `alpha_i = T_i / T_norm`, sample mean and
/// Bessel-corrected standard deviation floored at `sigma_floor`.
pub fn fit_phase_prior(durations: &[f64], t_norm_duration: f64, sigma_floor: f64) -> Result<PhasePrior> {
    if durations.is_empty() {
        return Err(Error::InvalidParameter("no durations to fit a phase prior".into()));
    }
    if !(t_norm_duration > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "nominal duration must be positive, got {t_norm_duration}"
        )));
    }
    if !(sigma_floor > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma floor must be positive, got {sigma_floor}")));
    }
    if let Some(d) = durations.iter().find(|&&d| !(d > 0.0 && d.is_finite())) {
        return Err(Error::InvalidParameter(format!("duration must be positive, got {d}")));
    }
    let alphas: Vec<f64> = durations.iter().map(|d| d / t_norm_duration).collect();
    let n = alphas.len() as f64;
    let mu_alpha = alphas.iter().sum::<f64>() / n;
    let std = if alphas.len() > 1 {
        (alphas.iter().map(|a| (a - mu_alpha).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(PhasePrior {
        mu_alpha,
        sigma_alpha: std.max(sigma_floor),
    })
}

/// Unnormalized log posterior of the scaling factor: prior log density plus
/// the marginal log likelihood of the observation.
pub fn phase_log_posterior(model: &InteractionModel, obs: &PartialObservation, alpha: f64) -> Result<f64> {
    Ok(model.phase_prior.log_density(alpha) + model.log_marginal_likelihood(obs, alpha)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEstimate {
    pub alpha_star: f64,
    pub log_posterior: f64,
    /// Spacing of the search grid.
    pub grid_step: f64,
}

/// Grid MAP search over the prior's ±3σ interval; ties go to the smaller
/// scaling.
pub fn estimate_phase(model: &InteractionModel, obs: &PartialObservation, grid_points: usize) -> Result<PhaseEstimate> {
    let grid = model.phase_prior.search_grid(grid_points)?;
    let mut best: Option<(f64, f64)> = None;
    for &alpha in &grid {
        let lp = phase_log_posterior(model, obs, alpha)?;
        if best.is_none_or(|(_, b)| lp > b) {
            best = Some((alpha, lp));
        }
    }
    let (alpha_star, log_posterior) = best.expect("grid is nonempty");
    Ok(PhaseEstimate {
        alpha_star,
        log_posterior,
        grid_step: grid[1] - grid[0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_durations_hit_the_floor() {
        let p = fit_phase_prior(&[100.0, 100.0, 100.0], 100.0, 0.05).unwrap();
        assert_eq!(p.mu_alpha, 1.0);
        assert_eq!(p.sigma_alpha, 0.05);
    }

    #[test]
    fn two_durations() {
        let p = fit_phase_prior(&[80.0, 120.0], 100.0, 0.05).unwrap();
        assert!((p.mu_alpha - 1.0).abs() < 1e-15);
        // sample std of {0.8, 1.2} = sqrt(0.08)
        assert!((p.sigma_alpha - 0.08f64.sqrt()).abs() < 1e-15);
        assert!((p.sigma_alpha - 0.282_842_712_474_619).abs() < 1e-12);
        let p = fit_phase_prior(&[80.0, 120.0], 100.0, 0.5).unwrap();
        assert_eq!(p.sigma_alpha, 0.5);
    }

    #[test]
    fn single_duration() {
        let p = fit_phase_prior(&[150.0], 100.0, 0.05).unwrap();
        assert_eq!(p.mu_alpha, 1.5);
        assert_eq!(p.sigma_alpha, 0.05);
    }

    #[test]
    fn rejects_bad_durations() {
        assert!(fit_phase_prior(&[], 100.0, 0.05).is_err());
        assert!(fit_phase_prior(&[100.0, 0.0], 100.0, 0.05).is_err());
        assert!(fit_phase_prior(&[-3.0], 100.0, 0.05).is_err());
    }

    #[test]
    fn grid_is_clipped_below() {
        let p = PhasePrior {
            mu_alpha: 0.2,
            sigma_alpha: 0.1,
        };
        let g = p.search_grid(5).unwrap();
        assert_eq!(g[0], MIN_ALPHA);
        assert!((g[4] - 0.5).abs() < 1e-15);
        assert!(p.search_grid(2).is_err());
    }
}
