//! Weighted estimating-equation solver.
//!
//! Everything here solves the same shape of problem: find β with
//!
//!   g(β) = (1/n) Σᵢ Σₖ wᵢₖ · U(level k, record i; β) = 0,
//!
//! where the per-record weight rows wᵢ decide what is being estimated.
//! Indicator rows at the observed level give the classical estimator
//! (original levels: the oracle; released levels: the naive, biased one).
//! Rows taken from the matching column of P⁻¹ give the perturbation-corrected
//! estimator. Posterior rows from a fitted latent model give the
//! model-dependent one, and any row set times nonnegative multipliers is a
//! resampled replicate for variance estimation.
//!
//! The solver is a damped Newton iteration: solve J δ = −g, halve the step
//! until the residual norm strictly decreases, declare convergence at
//! ‖g‖∞ ≤ tolerance. Singular Newton systems get Levenberg-style diagonal
//! damping before giving up. Record contributions are accumulated with a
//! deterministic pairwise reduction, so results never depend on scheduling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estfun::EstimatingFunction;
use crate::math::{max_abs, pairwise_block_sum};
use crate::matrix::SquareMat;
use crate::transition::{ReversionKind, ReversionMatrix};

/// How a weight scheme was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Indicator of the original (pre-perturbation) level.
    IndicatorOriginal,
    /// Indicator of the released (perturbed) level.
    IndicatorPerturbed,
    /// Column of P⁻¹ for the released level: undoes the mechanism in
    /// expectation.
    InverseTransition,
    /// Posterior probabilities from a fitted latent model.
    PosteriorModel,
    /// Any of the above times per-record resampling multipliers.
    Resampled,
}

/// Per-record weight rows over the K levels.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightScheme {
    n: usize,
    k: usize,
    /// Row-major n×k.
    weights: Vec<f64>,
    provenance: Provenance,
}

impl WeightScheme {
    fn indicator(levels: &[usize], k: usize, provenance: Provenance) -> Self {
        let n = levels.len();
        let mut weights = vec![0.0; n * k];
        for (i, &l) in levels.iter().enumerate() {
            weights[i * k + l] = 1.0;
        }
        Self {
            n,
            k,
            weights,
            provenance,
        }
    }

    /// Indicator rows at the original levels (custodian side only).
    pub fn indicator_original(data: &Dataset) -> Result<Self> {
        Ok(Self::indicator(
            data.require_original()?,
            data.levels(),
            Provenance::IndicatorOriginal,
        ))
    }

    /// Indicator rows at the released levels (treats them as the truth).
    pub fn indicator_perturbed(data: &Dataset) -> Result<Self> {
        Ok(Self::indicator(
            data.require_perturbed()?,
            data.levels(),
            Provenance::IndicatorPerturbed,
        ))
    }

    /// Row i is the column of P⁻¹ for record i's released level.
    pub fn inverse_transition(data: &Dataset, q: &ReversionMatrix) -> Result<Self> {
        if q.kind() != ReversionKind::InverseQ2 {
            return Err(Error::InvalidConfig {
                context: "inverse-transition weights need the inverse reversion, not the posterior"
                    .into(),
            });
        }
        let k = data.levels();
        if q.levels() != k {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "reversion matrix has {} levels, dataset has {k}",
                    q.levels()
                ),
            });
        }
        let released = data.require_perturbed()?;
        let n = released.len();
        let mut weights = vec![0.0; n * k];
        for (i, &l) in released.iter().enumerate() {
            weights[i * k..(i + 1) * k].copy_from_slice(q.column(l));
        }
        Ok(Self {
            n,
            k,
            weights,
            provenance: Provenance::InverseTransition,
        })
    }

    /// Posterior rows (row-major n×k), each a probability distribution over
    /// the true level given the record's released level and covariates.
    pub fn posterior(rows: Vec<f64>, k: usize) -> Result<Self> {
        if k < 2 || rows.len() % k != 0 {
            return Err(Error::DimensionMismatch {
                context: format!("{} posterior entries do not fill rows of {k}", rows.len()),
            });
        }
        let n = rows.len() / k;
        for i in 0..n {
            let row = &rows[i * k..(i + 1) * k];
            let mut sum = 0.0;
            for &w in row {
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidConfig {
                        context: format!("posterior weight {w} at record {i} is not a probability"),
                    });
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig {
                    context: format!("posterior row {i} sums to {sum}, expected 1"),
                });
            }
        }
        Ok(Self {
            n,
            k,
            weights: rows,
            provenance: Provenance::PosteriorModel,
        })
    }

    /// Scale each record's row by a nonnegative multiplier (resampling).
    pub fn with_multipliers(&self, multipliers: &[f64]) -> Result<Self> {
        if multipliers.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "{} multipliers for {} records",
                    multipliers.len(),
                    self.n
                ),
            });
        }
        let mut weights = self.weights.clone();
        for (i, &m) in multipliers.iter().enumerate() {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidConfig {
                    context: format!("multiplier {m} at record {i} is not finite and nonnegative"),
                });
            }
            for w in &mut weights[i * self.k..(i + 1) * self.k] {
                *w *= m;
            }
        }
        Ok(Self {
            n: self.n,
            k: self.k,
            weights,
            provenance: Provenance::Resampled,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn levels(&self) -> usize {
        self.k
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.k..(i + 1) * self.k]
    }
}

/// Jacobian strategy: use the estimating function's analytic form when it
/// has one, or always central finite differences of the aggregate residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    Analytic,
    FiniteDifference,
}

/// Starting point policy. `Auto` first solves the cheap indicator-perturbed
/// problem from zero and warm-starts the weighted problem there (weighted
/// residual surfaces are flatter; the naive solution is always nearby).
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Auto,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub init: Init,
    pub max_iterations: usize,
    /// Convergence threshold on ‖g‖∞.
    pub tolerance: f64,
    pub max_halvings: usize,
    pub jacobian: JacobianMode,
    /// Relative step for finite differences: h_j = fd_step · (1 + |β_j|).
    pub fd_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            init: Init::Auto,
            max_iterations: 100,
            tolerance: 1e-10,
            max_halvings: 30,
            jacobian: JacobianMode::Analytic,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    /// ‖g‖∞ at the returned point.
    pub residual_norm: f64,
    pub converged: bool,
    /// 1-norm condition number of the averaged Jacobian at the returned
    /// point (infinite when it is singular).
    pub jacobian_condition: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub beta: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

/// Largest absolute diagonal damping tried before declaring the Newton
/// system singular.
pub const MAX_NEWTON_DAMPING: f64 = 1e-4;

/// The weighted aggregate residual g(β) = (1/n) Σᵢ Σₖ wᵢₖ U(k, i; β).
pub fn residual(
    data: &Dataset,
    f: &dyn EstimatingFunction,
    w: &WeightScheme,
    beta: &[f64],
) -> Vec<f64> {
    let d = f.dim();
    let n = w.n();
    let mut tmp = vec![0.0; d];
    let mut total = pairwise_block_sum(n, d, |i, out| {
        out.fill(0.0);
        for (level, &wk) in w.row(i).iter().enumerate() {
            if wk != 0.0 {
                f.eval(data, i, level, beta, &mut tmp);
                for (o, &t) in out.iter_mut().zip(tmp.iter()) {
                    *o += wk * t;
                }
            }
        }
    });
    let inv_n = 1.0 / n as f64;
    for t in &mut total {
        *t *= inv_n;
    }
    total
}

/// The weighted average Jacobian Ω(β) = (1/n) Σᵢ Σₖ wᵢₖ ∂U/∂βᵀ(k, i; β),
/// analytic when the function provides it (and the mode allows), otherwise
/// central finite differences of `residual`.
pub fn average_jacobian(
    data: &Dataset,
    f: &dyn EstimatingFunction,
    w: &WeightScheme,
    beta: &[f64],
    cfg: &SolverConfig,
) -> SquareMat {
    let d = f.dim();
    let analytic = cfg.jacobian == JacobianMode::Analytic && {
        // Probe once; implementations provide the Jacobian either always or
        // never.
        let mut probe = vec![0.0; d * d];
        w.n() > 0 && f.jacobian(data, 0, 0, beta, &mut probe)
    };
    if analytic {
        let n = w.n();
        let mut tmp = vec![0.0; d * d];
        let total = pairwise_block_sum(n, d * d, |i, out| {
            out.fill(0.0);
            for (level, &wk) in w.row(i).iter().enumerate() {
                if wk != 0.0 {
                    f.jacobian(data, i, level, beta, &mut tmp);
                    for (o, &t) in out.iter_mut().zip(tmp.iter()) {
                        *o += wk * t;
                    }
                }
            }
        });
        let inv_n = 1.0 / n as f64;
        let mut jac = SquareMat::zeros(d);
        for c in 0..d {
            for r in 0..d {
                jac.set(r, c, total[c * d + r] * inv_n);
            }
        }
        jac
    } else {
        let mut jac = SquareMat::zeros(d);
        let mut point = beta.to_vec();
        for c in 0..d {
            let h = cfg.fd_step * (1.0 + beta[c].abs());
            point[c] = beta[c] + h;
            let gp = residual(data, f, w, &point);
            point[c] = beta[c] - h;
            let gm = residual(data, f, w, &point);
            point[c] = beta[c];
            for r in 0..d {
                jac.set(r, c, (gp[r] - gm[r]) / (2.0 * h));
            }
        }
        jac
    }
}

/// Solve J δ = −g, escalating diagonal damping when J is singular.
fn newton_direction(jac: &SquareMat, g: &[f64]) -> Result<Vec<f64>> {
    let d = jac.size();
    let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
    if let Ok(delta) = jac.solve(&neg_g) {
        if delta.iter().all(|v| v.is_finite()) {
            return Ok(delta);
        }
    }
    let mut damping = 1e-12;
    while damping <= MAX_NEWTON_DAMPING {
        let mut damped = jac.clone();
        for i in 0..d {
            damped.set(i, i, damped.get(i, i) + damping);
        }
        if let Ok(delta) = damped.solve(&neg_g) {
            if delta.iter().all(|v| v.is_finite()) {
                return Ok(delta);
            }
        }
        damping *= 100.0;
    }
    Err(Error::SingularJacobian {
        max_damping: MAX_NEWTON_DAMPING,
    })
}

fn check_shapes(data: &Dataset, f: &dyn EstimatingFunction, w: &WeightScheme) -> Result<()> {
    if w.n() == 0 {
        return Err(Error::InvalidConfig {
            context: "cannot solve on an empty dataset".into(),
        });
    }
    if w.n() != data.n() {
        return Err(Error::DimensionMismatch {
            context: format!("weights cover {} records, dataset has {}", w.n(), data.n()),
        });
    }
    if w.levels() != f.levels() || f.levels() != data.levels() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "levels disagree: weights {}, estimating function {}, dataset {}",
                w.levels(),
                f.levels(),
                data.levels()
            ),
        });
    }
    if f.dim() == 0 {
        return Err(Error::InvalidConfig {
            context: "estimating function has dimension 0".into(),
        });
    }
    Ok(())
}

/// Damped Newton on the weighted residual. Returns the final iterate with a
/// `converged` flag — running out of budget or stalling is reported, not
/// hidden behind an error — while structural failures (shapes, singular
/// systems, non-finite starting residual) are hard errors.
pub fn solve(
    data: &Dataset,
    f: &dyn EstimatingFunction,
    w: &WeightScheme,
    cfg: &SolverConfig,
) -> Result<Solution> {
    check_shapes(data, f, w)?;
    let d = f.dim();

    let mut beta = match &cfg.init {
        Init::Fixed(b) => {
            if b.len() != d {
                return Err(Error::DimensionMismatch {
                    context: format!("initial point has length {}, expected {d}", b.len()),
                });
            }
            b.clone()
        }
        Init::Auto => auto_init(data, f, w, cfg),
    };

    let mut g = residual(data, f, w, &beta);
    let mut gnorm = max_abs(&g);
    if !gnorm.is_finite() {
        return Err(Error::NonFinite {
            context: "residual at the initial point".into(),
        });
    }

    let mut iterations = 0;
    let mut converged = gnorm <= cfg.tolerance;
    while !converged && iterations < cfg.max_iterations {
        let jac = average_jacobian(data, f, w, &beta, cfg);
        let delta = newton_direction(&jac, &g)?;

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let cand: Vec<f64> = beta
                .iter()
                .zip(delta.iter())
                .map(|(b, dl)| b + step * dl)
                .collect();
            let gc = residual(data, f, w, &cand);
            let nc = max_abs(&gc);
            if nc.is_finite() && (nc < gnorm || nc <= cfg.tolerance) {
                beta = cand;
                g = gc;
                gnorm = nc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            // Stalled: no step of any length improves the residual.
            break;
        }
        converged = gnorm <= cfg.tolerance;
    }

    let jacobian_condition = average_jacobian(data, f, w, &beta, cfg)
        .condition_one()
        .unwrap_or(f64::INFINITY);

    Ok(Solution {
        beta,
        diagnostics: SolveDiagnostics {
            iterations,
            residual_norm: gnorm,
            converged,
            jacobian_condition,
        },
    })
}

/// Warm start for re-weighted problems: solve the indicator-perturbed
/// problem from zero first. Falls back to zero if that is unavailable or
/// fails — the starting point is a heuristic, never a hard requirement.
fn auto_init(
    data: &Dataset,
    f: &dyn EstimatingFunction,
    w: &WeightScheme,
    cfg: &SolverConfig,
) -> Vec<f64> {
    let d = f.dim();
    let zeros = vec![0.0; d];
    if !matches!(
        w.provenance(),
        Provenance::InverseTransition | Provenance::PosteriorModel
    ) {
        return zeros;
    }
    let Ok(indicator) = WeightScheme::indicator_perturbed(data) else {
        return zeros;
    };
    let sub = SolverConfig {
        init: Init::Fixed(zeros.clone()),
        ..cfg.clone()
    };
    match solve(data, f, &indicator, &sub) {
        Ok(sol) if sol.diagnostics.converged && sol.beta.iter().all(|v| v.is_finite()) => sol.beta,
        _ => zeros,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estfun::{build_custom, build_linear, build_logistic, build_mean, EstimandSpec};
    use crate::mechanism::{recover_frequencies, FrequencyVector};
    use crate::transition::TransitionMatrix;
    use alloc::boxed::Box;

    fn example_p() -> TransitionMatrix {
        TransitionMatrix::from_rows(&[vec![0.8, 0.1], vec![0.2, 0.9]]).unwrap()
    }

    fn levels_data(original: Vec<usize>, perturbed: Vec<usize>) -> Dataset {
        let mut d = Dataset::new(2).unwrap();
        if !original.is_empty() {
            d.set_original_levels(original).unwrap();
        }
        if !perturbed.is_empty() {
            d.set_perturbed_levels(perturbed).unwrap();
        }
        d
    }

    #[test]
    fn mean_with_indicator_weights_solves_in_one_step() {
        let d = levels_data(vec![0, 0, 1, 1], vec![]);
        let f = build_mean(2);
        let w = WeightScheme::indicator_original(&d).unwrap();
        let sol = solve(&d, &f, &w, &SolverConfig::default()).unwrap();
        assert!((sol.beta[0] - 0.5).abs() < 1e-15);
        assert_eq!(sol.diagnostics.iterations, 1);
        assert!(sol.diagnostics.converged);
        assert!((sol.diagnostics.jacobian_condition - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_with_inverse_weights_matches_hand_computation() {
        // Ten records, six released at level 1. The weighted mean equation
        // gives beta = (4 q_{10} + 6 q_{11}) / 10 with q the second row of
        // P^{-1}: (4 (-2/7) + 6 (8/7)) / 10 = 4/7.
        let d = levels_data(vec![], vec![1, 1, 1, 0, 1, 0, 1, 0, 1, 0]);
        let f = build_mean(2);
        let q = example_p().invert().unwrap();
        let w = WeightScheme::inverse_transition(&d, &q).unwrap();
        let sol = solve(&d, &f, &w, &SolverConfig::default()).unwrap();
        assert!((sol.beta[0] - 4.0 / 7.0).abs() < 1e-12);

        // Cross-check: the same number is the level-1 component of the
        // recovered marginal frequencies.
        let obs = FrequencyVector::from_levels(d.require_perturbed().unwrap(), 2).unwrap();
        let rec = recover_frequencies(&q, &obs).unwrap();
        assert!((rec.raw[1] - sol.beta[0]).abs() < 1e-12);
    }

    /// Plain logistic MLE by iteratively reweighted least squares, as an
    /// independent check on the Newton solver.
    fn irls_logistic(x: &[f64], y: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut beta = vec![0.0, 0.0];
        for _ in 0..50 {
            let mut xtwx = SquareMat::zeros(2);
            let mut xtz = vec![0.0, 0.0];
            for i in 0..n {
                let xi = [1.0, x[i]];
                let eta = beta[0] * xi[0] + beta[1] * xi[1];
                let mu = crate::math::expit(eta);
                let wgt = mu * (1.0 - mu);
                for r in 0..2 {
                    xtz[r] += xi[r] * (y[i] - mu);
                    for c in 0..2 {
                        xtwx.set(r, c, xtwx.get(r, c) + wgt * xi[r] * xi[c]);
                    }
                }
            }
            let step = xtwx.solve(&xtz).unwrap();
            beta[0] += step[0];
            beta[1] += step[1];
            if step.iter().all(|s| s.abs() < 1e-14) {
                break;
            }
        }
        beta
    }

    #[test]
    fn logistic_with_indicator_weights_matches_irls() {
        let x = vec![
            -1.2, 0.4, 1.7, -0.3, 0.9, 2.1, -1.8, 0.0, 0.6, 1.1, -0.7, 0.2, 1.4, -0.5, 0.8,
            -2.0, 1.9, 0.3, -1.1, 0.5,
        ];
        let y = vec![
            0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0,
            1.0, 0.0, 0.0, 1.0,
        ];
        let mut d = Dataset::new(2).unwrap();
        d.push_column("x", x.clone()).unwrap();
        d.set_original_levels(y.iter().map(|&v| v as usize).collect()).unwrap();

        let spec = EstimandSpec::logistic_response("s", &["x"], 2);
        let f = build_logistic(&spec, &d).unwrap();
        let w = WeightScheme::indicator_original(&d).unwrap();
        let sol = solve(&d, &f, &w, &SolverConfig::default()).unwrap();
        assert!(sol.diagnostics.converged);

        let reference = irls_logistic(&x, &y);
        assert!((sol.beta[0] - reference[0]).abs() < 1e-8, "{:?} vs {reference:?}", sol.beta);
        assert!((sol.beta[1] - reference[1]).abs() < 1e-8);
    }

    #[test]
    fn scaling_all_weights_leaves_the_root_unchanged() {
        let d = levels_data(vec![], vec![1, 0, 1, 1, 0, 1, 1, 0]);
        let f = build_mean(2);
        let q = example_p().invert().unwrap();
        let w = WeightScheme::inverse_transition(&d, &q).unwrap();
        let scaled = w.with_multipliers(&vec![3.7; 8]).unwrap();
        assert_eq!(scaled.provenance(), Provenance::Resampled);
        let cfg = SolverConfig {
            init: Init::Fixed(vec![0.0]),
            ..SolverConfig::default()
        };
        let a = solve(&d, &f, &w, &cfg).unwrap();
        let b = solve(&d, &f, &scaled, &cfg).unwrap();
        assert!((a.beta[0] - b.beta[0]).abs() < 1e-12);
    }

    #[test]
    fn identity_mechanism_makes_all_weightings_agree() {
        let x = vec![0.5, -0.4, 1.2, 0.3, -1.0, 0.8, -0.2, 1.5, 0.1, -0.6];
        let y = vec![1, 0, 1, 1, 0, 1, 0, 1, 0, 0];
        let mut d = Dataset::new(2).unwrap();
        d.push_column("x", x).unwrap();
        d.set_original_levels(y.clone()).unwrap();
        d.set_perturbed_levels(y).unwrap();

        let spec = EstimandSpec::logistic_response("s", &["x"], 2);
        let f = build_logistic(&spec, &d).unwrap();
        let q = TransitionMatrix::identity(2).unwrap().invert().unwrap();

        let w_inv = WeightScheme::inverse_transition(&d, &q).unwrap();
        let w_orig = WeightScheme::indicator_original(&d).unwrap();
        let w_pert = WeightScheme::indicator_perturbed(&d).unwrap();
        let cfg = SolverConfig::default();
        let a = solve(&d, &f, &w_inv, &cfg).unwrap();
        let b = solve(&d, &f, &w_orig, &cfg).unwrap();
        let c = solve(&d, &f, &w_pert, &cfg).unwrap();
        for j in 0..2 {
            assert!((a.beta[j] - b.beta[j]).abs() < 1e-9);
            assert!((b.beta[j] - c.beta[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn average_jacobian_closed_forms() {
        // Mean: dU/dbeta = -1 for every record and level.
        let d = levels_data(vec![0, 1, 1], vec![]);
        let f = build_mean(2);
        let w = WeightScheme::indicator_original(&d).unwrap();
        let jac = average_jacobian(&d, &f, &w, &[0.3], &SolverConfig::default());
        assert!((jac.get(0, 0) + 1.0).abs() < 1e-15);

        // Linear model: the Jacobian is -(1/n) sum x x^T whatever beta is.
        let mut d = Dataset::new(2).unwrap();
        d.push_column("y", vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        d.set_perturbed_levels(vec![0, 1, 0, 1]).unwrap();
        let spec = EstimandSpec::linear_with_sensitive_covariate("y", &["s"], "s", 2);
        let f = build_linear(&spec, &d).unwrap();
        let w = WeightScheme::indicator_perturbed(&d).unwrap();
        let jac = average_jacobian(&d, &f, &w, &[5.0, -2.0], &SolverConfig::default());
        // Designs are (1, 0), (1, 1), (1, 0), (1, 1):
        // -(1/4) sum = [[-1, -1/2], [-1/2, -1/2]].
        assert!((jac.get(0, 0) + 1.0).abs() < 1e-15);
        assert!((jac.get(0, 1) + 0.5).abs() < 1e-15);
        assert!((jac.get(1, 0) + 0.5).abs() < 1e-15);
        assert!((jac.get(1, 1) + 0.5).abs() < 1e-15);
    }

    /// Deterministic logistic dataset whose sensitive response has been run
    /// through the example mechanism: x on a grid, y ~ Bernoulli(expit(-0.5
    /// + x)) from a seeded stream, then perturbed. Large enough (n = 200)
    /// that the re-weighted score has a root.
    fn perturbed_logistic_data() -> Dataset {
        use crate::rng::{stream_rng, uniform01};
        let n = 200;
        let x: Vec<f64> = (0..n).map(|i| -1.5 + 3.0 * i as f64 / (n - 1) as f64).collect();
        let mut rng = stream_rng(42, 0);
        let y: Vec<usize> = x
            .iter()
            .map(|&xi| usize::from(uniform01(&mut rng) < crate::math::expit(-0.5 + xi)))
            .collect();
        let mut d = Dataset::new(2).unwrap();
        d.push_column("x", x).unwrap();
        d.set_original_levels(y).unwrap();
        crate::mechanism::perturb(&d, &example_p(), 7).unwrap()
    }

    #[test]
    fn analytic_and_finite_difference_jacobians_agree() {
        let d = perturbed_logistic_data();
        let spec = EstimandSpec::logistic_response("s", &["x"], 2);
        let f = build_logistic(&spec, &d).unwrap();
        let q = example_p().invert().unwrap();
        let w = WeightScheme::inverse_transition(&d, &q).unwrap();

        let beta = [0.2, -0.5];
        let cfg_a = SolverConfig::default();
        let cfg_fd = SolverConfig {
            jacobian: JacobianMode::FiniteDifference,
            ..SolverConfig::default()
        };
        let ja = average_jacobian(&d, &f, &w, &beta, &cfg_a);
        let jf = average_jacobian(&d, &f, &w, &beta, &cfg_fd);
        for r in 0..2 {
            for c in 0..2 {
                assert!(
                    (ja.get(r, c) - jf.get(r, c)).abs() < 1e-7,
                    "J[{r},{c}]: {} vs {}",
                    ja.get(r, c),
                    jf.get(r, c)
                );
            }
        }

        // And the two modes land on the same root.
        let a = solve(&d, &f, &w, &cfg_a).unwrap();
        let b = solve(&d, &f, &w, &cfg_fd).unwrap();
        assert!(a.diagnostics.converged && b.diagnostics.converged);
        assert!((a.beta[0] - b.beta[0]).abs() < 1e-8);
        assert!((a.beta[1] - b.beta[1]).abs() < 1e-8);
    }

    #[test]
    fn mixing_back_through_the_mechanism_recovers_the_plain_function() {
        // For any record and true level k:
        //   sum_i P(i | k) * [sum_k' U(k') q_{k' i}] = U(k),
        // because Q P = I. This is what makes the inverse weighting
        // conditionally unbiased given the true level.
        let p = example_p();
        let q = p.invert().unwrap();
        let mut d = Dataset::new(2).unwrap();
        d.push_column("x", vec![0.3, -0.8, 1.4]).unwrap();
        d.set_perturbed_levels(vec![0, 1, 1]).unwrap();
        let spec = EstimandSpec::logistic_response("s", &["x"], 2);
        let f = build_logistic(&spec, &d).unwrap();
        let beta = [0.4, -1.2];

        let (mut u, mut phi, mut back) = ([0.0; 2], [[0.0; 2]; 2], [0.0; 2]);
        for record in 0..3 {
            // phi(i) = sum_k' U(k') q_{k' i} for each observable level i.
            for i in 0..2 {
                phi[i] = [0.0; 2];
                for kp in 0..2 {
                    f.eval(&d, record, kp, &beta, &mut u);
                    for r in 0..2 {
                        phi[i][r] += u[r] * q.entry(kp, i);
                    }
                }
            }
            for k in 0..2 {
                back = [0.0; 2];
                for i in 0..2 {
                    for r in 0..2 {
                        back[r] += p.entry(i, k) * phi[i][r];
                    }
                }
                f.eval(&d, record, k, &beta, &mut u);
                for r in 0..2 {
                    assert!((back[r] - u[r]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn auto_init_agrees_with_manual_warm_start() {
        let d = perturbed_logistic_data();
        let spec = EstimandSpec::logistic_response("s", &["x"], 2);
        let f = build_logistic(&spec, &d).unwrap();
        let q = example_p().invert().unwrap();
        let w = WeightScheme::inverse_transition(&d, &q).unwrap();

        let auto = solve(&d, &f, &w, &SolverConfig::default()).unwrap();
        let naive = solve(
            &d,
            &f,
            &WeightScheme::indicator_perturbed(&d).unwrap(),
            &SolverConfig {
                init: Init::Fixed(vec![0.0, 0.0]),
                ..SolverConfig::default()
            },
        )
        .unwrap();
        let manual = solve(
            &d,
            &f,
            &w,
            &SolverConfig {
                init: Init::Fixed(naive.beta),
                ..SolverConfig::default()
            },
        )
        .unwrap();
        assert!(auto.diagnostics.converged);
        for j in 0..2 {
            assert!((auto.beta[j] - manual.beta[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn rootless_equation_reports_non_convergence() {
        // U = 1 + expit(beta) > 1 everywhere: no root exists. The solver
        // must stop and say so rather than erroring or looping.
        let d = levels_data(vec![0, 1], vec![]);
        let f = build_custom(
            2,
            1,
            vec![
                Box::new(|_: &Dataset, _, b: &[f64], out: &mut [f64]| {
                    out[0] = 1.0 + crate::math::expit(b[0]);
                }),
                Box::new(|_: &Dataset, _, b: &[f64], out: &mut [f64]| {
                    out[0] = 1.0 + crate::math::expit(b[0]);
                }),
            ],
        )
        .unwrap();
        let w = WeightScheme::indicator_original(&d).unwrap();
        let cfg = SolverConfig {
            max_iterations: 25,
            ..SolverConfig::default()
        };
        let sol = solve(&d, &f, &w, &cfg).unwrap();
        assert!(!sol.diagnostics.converged);
        assert!(sol.diagnostics.residual_norm >= 1.0);
    }

    #[test]
    fn constant_function_stalls_without_converging() {
        // U = 1 with zero Jacobian: diagonal damping makes the Newton
        // system solvable, but no step can reduce the residual, so the
        // solver stops after one stalled iteration and reports failure.
        let d = levels_data(vec![0, 1], vec![]);
        let f = build_custom(
            2,
            1,
            vec![
                Box::new(|_: &Dataset, _, _: &[f64], out: &mut [f64]| out[0] = 1.0),
                Box::new(|_: &Dataset, _, _: &[f64], out: &mut [f64]| out[0] = 1.0),
            ],
        )
        .unwrap();
        let w = WeightScheme::indicator_original(&d).unwrap();
        let sol = solve(&d, &f, &w, &SolverConfig::default()).unwrap();
        assert!(!sol.diagnostics.converged);
        assert_eq!(sol.diagnostics.iterations, 1);
        assert!((sol.diagnostics.residual_norm - 1.0).abs() < 1e-15);
        assert_eq!(sol.beta, vec![0.0]);
    }

    #[test]
    fn undampable_newton_system_is_a_hard_error() {
        // A rank-one matrix on a huge scale: adding at most 1e-4 to the
        // diagonal cannot rescue it, so every rung of the damping ladder
        // still pivots below the relative floor.
        let jac = SquareMat::from_rows(&[vec![1e20, 1e20], vec![1e20, 1e20]]).unwrap();
        let err = newton_direction(&jac, &[1.0, 2.0]).unwrap_err();
        assert_eq!(
            err,
            Error::SingularJacobian {
                max_damping: MAX_NEWTON_DAMPING
            }
        );

        // A merely singular matrix on an ordinary scale is rescued.
        let singular = SquareMat::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let delta = newton_direction(&singular, &[1.0, 2.0]).unwrap();
        assert!(delta.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn weight_scheme_validation() {
        let d = levels_data(vec![0, 1], vec![1, 0]);
        let w = WeightScheme::indicator_perturbed(&d).unwrap();
        assert_eq!(w.row(0), &[0.0, 1.0]);
        assert_eq!(w.row(1), &[1.0, 0.0]);

        assert!(matches!(
            w.with_multipliers(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            w.with_multipliers(&[1.0, -0.5]),
            Err(Error::InvalidConfig { .. })
        ));

        // Posterior rows must be proper distributions.
        assert!(WeightScheme::posterior(vec![0.5, 0.5, 0.2, 0.8], 2).is_ok());
        assert!(WeightScheme::posterior(vec![0.5, 0.6, 0.2, 0.8], 2).is_err());
        assert!(WeightScheme::posterior(vec![-0.1, 1.1], 2).is_err());
        assert!(WeightScheme::posterior(vec![0.5, 0.5, 0.5], 2).is_err());

        // The posterior reversion cannot be used as inverse weights.
        let p = example_p();
        let pi = FrequencyVector::proper(vec![0.5, 0.5]).unwrap();
        let q1 = crate::mechanism::diagnostics::reversion_probabilistic(&p, &pi).unwrap();
        assert!(matches!(
            WeightScheme::inverse_transition(&d, &q1),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let d = levels_data(vec![0, 1, 1], vec![]);
        let f = build_mean(2);
        let w = WeightScheme::indicator(&[0, 1], 2, Provenance::IndicatorOriginal);
        assert!(matches!(
            solve(&d, &f, &w, &SolverConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));

        let empty = Dataset::new(2).unwrap();
        let w0 = WeightScheme::indicator(&[], 2, Provenance::IndicatorOriginal);
        assert!(matches!(
            solve(&empty, &f, &w0, &SolverConfig::default()),
            Err(Error::InvalidConfig { .. })
        ));

        let bad_init = SolverConfig {
            init: Init::Fixed(vec![0.0, 0.0]),
            ..SolverConfig::default()
        };
        let w = WeightScheme::indicator_original(&d).unwrap();
        assert!(matches!(
            solve(&d, &f, &w, &bad_init),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
