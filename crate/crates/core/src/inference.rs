//! Variance and interval estimation for fitted estimates.
//!
//! Two routes to the same asymptotic covariance:
//!
//! * **Multiplier resampling** — re-solve the weighted estimating equation M
//!   times, each time scaling every record's contribution by an iid
//!   nonnegative multiplier with mean one and variance one. The sample
//!   covariance of the M re-solved estimates estimates the covariance of β̂.
//!   No derivatives, no matrix inversion; works for any weight scheme.
//! * **Plug-in sandwich** — Ω̂⁻¹ [(1/n) Σᵢ φᵢφᵢᵀ] Ω̂⁻ᵀ / n with Ω̂ the
//!   weighted average Jacobian at β̂ and φᵢ the stored influence rows. Fast
//!   and a useful cross-check for the resampled covariance.

use alloc::format;
use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estfun::EstimatingFunction;
use crate::estimators::{influence_matrix, EstimateResult};
use crate::math::{normal_quantile, pairwise_block_sum};
use crate::matrix::SquareMat;
use crate::rng::{poisson_one, standard_exponential, stream_rng};
use crate::solver::{average_jacobian, solve, Init, SolverConfig, WeightScheme};
use crate::transition::TransitionMatrix;

/// Multiplier distributions: nonnegative, mean one, variance one.
/// `Constant` (always 1) deliberately breaks the variance contract and
/// exists only to test the machinery — it must produce zero covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplierLaw {
    Exponential,
    PoissonOne,
    Constant,
}

impl MultiplierLaw {
    pub fn label(&self) -> &'static str {
        match self {
            MultiplierLaw::Exponential => "exponential",
            MultiplierLaw::PoissonOne => "poisson",
            MultiplierLaw::Constant => "constant",
        }
    }

    fn draw(&self, rng: &mut crate::rng::ChaCha12Rng) -> f64 {
        match self {
            MultiplierLaw::Exponential => standard_exponential(rng),
            MultiplierLaw::PoissonOne => poisson_one(rng),
            MultiplierLaw::Constant => 1.0,
        }
    }
}

/// Fewest resamples accepted; below this the sample covariance of the
/// re-solved estimates is too noisy to report.
pub const MIN_RESAMPLES: usize = 50;

/// Condition-number ceiling for inverting the average Jacobian in the
/// plug-in sandwich.
pub const OMEGA_CONDITION_LIMIT: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
pub struct ResampleConfig {
    /// Number of resamples M (at least [`MIN_RESAMPLES`], default 500).
    pub resamples: usize,
    pub law: MultiplierLaw,
    /// Seed for the multiplier streams; resample m reads stream m of this
    /// seed, so results never depend on execution order. Callers running
    /// several resampling passes should derive distinct seeds per pass.
    pub seed: u64,
    /// Abort when more than this percentage of resamples fail to converge
    /// (dropping many failures silently would understate the variance).
    pub failure_limit_percent: f64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self {
            resamples: 500,
            law: MultiplierLaw::Exponential,
            seed: 0,
            failure_limit_percent: 5.0,
        }
    }
}

/// Resampled covariance plus the failure accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampleVariance {
    pub covariance: SquareMat,
    pub resamples_used: usize,
    pub failures: usize,
}

/// Multiplier-resampled covariance for an estimate fitted with weights `w`.
/// Each resample re-solves the equation with the rows scaled by fresh
/// multipliers, warm-started at β̂.
pub fn resample_variance_with_weights(
    data: &Dataset,
    f: &dyn EstimatingFunction,
    w: &WeightScheme,
    beta_hat: &[f64],
    rcfg: &ResampleConfig,
    solver_cfg: &SolverConfig,
) -> Result<ResampleVariance> {
    if rcfg.resamples < MIN_RESAMPLES {
        return Err(Error::InvalidConfig {
            context: format!(
                "{} resamples requested, need at least {MIN_RESAMPLES}",
                rcfg.resamples
            ),
        });
    }
    if !(0.0..=100.0).contains(&rcfg.failure_limit_percent) {
        return Err(Error::InvalidConfig {
            context: format!(
                "failure limit {}% is not a percentage",
                rcfg.failure_limit_percent
            ),
        });
    }
    let d = f.dim();
    if beta_hat.len() != d {
        return Err(Error::DimensionMismatch {
            context: format!("estimate has length {}, expected {d}", beta_hat.len()),
        });
    }

    let n = w.n();
    let warm = SolverConfig {
        init: Init::Fixed(beta_hat.to_vec()),
        ..solver_cfg.clone()
    };
    let mut solutions: Vec<Vec<f64>> = Vec::with_capacity(rcfg.resamples);
    let mut failures = 0usize;
    let mut multipliers = alloc::vec![0.0; n];
    for m in 0..rcfg.resamples {
        let mut rng = stream_rng(rcfg.seed, m as u64);
        for l in multipliers.iter_mut() {
            *l = rcfg.law.draw(&mut rng);
        }
        let wm = w.with_multipliers(&multipliers)?;
        match solve(data, f, &wm, &warm) {
            Ok(sol) if sol.diagnostics.converged && sol.beta.iter().all(|v| v.is_finite()) => {
                solutions.push(sol.beta);
            }
            Ok(_) => failures += 1,
            Err(Error::SingularJacobian { .. }) | Err(Error::NonFinite { .. }) => failures += 1,
            Err(e) => return Err(e),
        }
    }
    if (failures * 100) as f64 > rcfg.failure_limit_percent * rcfg.resamples as f64 {
        return Err(Error::TooManyFailures {
            failures,
            resamples: rcfg.resamples,
            limit_percent: rcfg.failure_limit_percent,
        });
    }

    let used = solutions.len();
    let mut mean = alloc::vec![0.0; d];
    for sol in &solutions {
        for (m, &b) in mean.iter_mut().zip(sol.iter()) {
            *m += b;
        }
    }
    for m in &mut mean {
        *m /= used as f64;
    }
    let mut cov = SquareMat::zeros(d);
    for sol in &solutions {
        for r in 0..d {
            let dr = sol[r] - mean[r];
            for c in 0..=r {
                let v = cov.get(r, c) + dr * (sol[c] - mean[c]);
                cov.set(r, c, v);
            }
        }
    }
    let denom = (used - 1) as f64;
    for r in 0..d {
        for c in 0..=r {
            let v = cov.get(r, c) / denom;
            cov.set(r, c, v);
            cov.set(c, r, v);
        }
    }
    Ok(ResampleVariance {
        covariance: cov,
        resamples_used: used,
        failures,
    })
}

/// Resampled covariance for the perturbation-corrected estimator: builds the
/// inverse-transition weights from the mechanism and released levels.
pub fn resample_variance(
    data: &Dataset,
    p: &TransitionMatrix,
    f: &dyn EstimatingFunction,
    beta_hat: &[f64],
    rcfg: &ResampleConfig,
    solver_cfg: &SolverConfig,
) -> Result<ResampleVariance> {
    let q = p.invert()?;
    let w = WeightScheme::inverse_transition(data, &q)?;
    resample_variance_with_weights(data, f, &w, beta_hat, rcfg, solver_cfg)
}

/// Plug-in sandwich covariance Ω̂⁻¹ [(1/n) Σ φφᵀ] Ω̂⁻ᵀ / n for an estimate
/// fitted with weights `w`.
pub fn plugin_variance_with_weights(
    data: &Dataset,
    f: &dyn EstimatingFunction,
    w: &WeightScheme,
    beta_hat: &[f64],
    solver_cfg: &SolverConfig,
) -> Result<SquareMat> {
    let d = f.dim();
    if beta_hat.len() != d {
        return Err(Error::DimensionMismatch {
            context: format!("estimate has length {}, expected {d}", beta_hat.len()),
        });
    }
    let omega = average_jacobian(data, f, w, beta_hat, solver_cfg);
    let condition = omega.condition_one().unwrap_or(f64::INFINITY);
    if !condition.is_finite() || condition > OMEGA_CONDITION_LIMIT {
        return Err(Error::SingularOmega {
            condition,
            limit: OMEGA_CONDITION_LIMIT,
        });
    }
    let omega_inv = omega.invert()?;

    let n = w.n();
    let phi = influence_matrix(data, f, w, beta_hat);
    let sums = pairwise_block_sum(n, d * d, |i, out| {
        let row = &phi[i * d..(i + 1) * d];
        for c in 0..d {
            for r in 0..d {
                out[c * d + r] = row[r] * row[c];
            }
        }
    });
    let mut middle = SquareMat::zeros(d);
    for c in 0..d {
        for r in 0..d {
            middle.set(r, c, sums[c * d + r] / n as f64);
        }
    }

    let mut cov = omega_inv.mat_mul(&middle).mat_mul(&omega_inv.transpose());
    for r in 0..d {
        for c in 0..d {
            cov.set(r, c, cov.get(r, c) / n as f64);
        }
    }
    // The formula is symmetric; wipe out the last-bit asymmetry from the
    // two matrix products.
    for r in 0..d {
        for c in 0..r {
            let s = 0.5 * (cov.get(r, c) + cov.get(c, r));
            cov.set(r, c, s);
            cov.set(c, r, s);
        }
    }
    Ok(cov)
}

/// Plug-in sandwich for the perturbation-corrected estimator.
pub fn plugin_variance(
    data: &Dataset,
    p: &TransitionMatrix,
    f: &dyn EstimatingFunction,
    beta_hat: &[f64],
    solver_cfg: &SolverConfig,
) -> Result<SquareMat> {
    let q = p.invert()?;
    let w = WeightScheme::inverse_transition(data, &q)?;
    plugin_variance_with_weights(data, f, &w, beta_hat, solver_cfg)
}

/// Equal-sided normal confidence intervals β̂ⱼ ± z·SEⱼ from the covariance
/// attached to the estimate.
pub fn confidence_intervals(result: &EstimateResult, level: f64) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig {
            context: format!("confidence level {level} must lie strictly between 0 and 1"),
        });
    }
    let se = result.std_errors().ok_or_else(|| Error::InvalidConfig {
        context: "no covariance attached to the estimate".into(),
    })?;
    let z = normal_quantile(0.5 * (1.0 + level));
    Ok(result
        .beta()
        .iter()
        .zip(se.iter())
        .map(|(&b, &s)| (b - z * s, b + z * s))
        .collect())
}
