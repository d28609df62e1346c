//! The estimator suite.
//!
//! Three estimators share one engine and differ only in their weight rows:
//!
//! * **proposed** — inverse-transition weights (columns of P⁻¹ picked by the
//!   released level). Consistent for the original-data estimand using only
//!   the released data and the public mechanism.
//! * **oracle** — indicator weights at the original levels. Needs custodian
//!   access; the benchmark nothing released can beat.
//! * **naive** — indicator weights at the released levels. Pretends the
//!   perturbation never happened; generally biased.
//!
//! Each fit stores its per-record influence rows φᵢ = Σₖ wᵢₖ U(k, i; β̂) so
//! variance estimation never has to re-touch the dataset.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estfun::EstimatingFunction;
use crate::matrix::SquareMat;
use crate::solver::{solve, SolveDiagnostics, SolverConfig, WeightScheme};
use crate::transition::TransitionMatrix;

/// Which estimator produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Proposed,
    Oracle,
    Naive,
    ModelDependent,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Oracle => "oracle",
            Method::Naive => "naive",
            Method::ModelDependent => "model-dependent",
        }
    }
}

/// A fitted estimate: the point estimate, solver diagnostics, the stored
/// per-record influence rows, and (once attached) a covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    method: Method,
    beta: Vec<f64>,
    diagnostics: SolveDiagnostics,
    /// Row-major n×d: φᵢ = Σₖ wᵢₖ U(k, i; β̂).
    influence: Vec<f64>,
    n: usize,
    dim: usize,
    covariance: Option<SquareMat>,
}

impl EstimateResult {
    pub(crate) fn new(
        method: Method,
        beta: Vec<f64>,
        diagnostics: SolveDiagnostics,
        influence: Vec<f64>,
        n: usize,
    ) -> Self {
        let dim = beta.len();
        debug_assert_eq!(influence.len(), n * dim);
        Self {
            method,
            beta,
            diagnostics,
            influence,
            n,
            dim,
            covariance: None,
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn diagnostics(&self) -> &SolveDiagnostics {
        &self.diagnostics
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Influence row of record `i` at the fitted point.
    pub fn influence(&self, i: usize) -> &[f64] {
        &self.influence[i * self.dim..(i + 1) * self.dim]
    }

    pub fn covariance(&self) -> Option<&SquareMat> {
        self.covariance.as_ref()
    }

    /// Attach an estimated covariance of β̂ (from either variance method).
    pub fn set_covariance(&mut self, covariance: SquareMat) -> Result<()> {
        if covariance.size() != self.dim {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "covariance is {}×{0}, estimate has dimension {}",
                    covariance.size(),
                    self.dim
                ),
            });
        }
        self.covariance = Some(covariance);
        Ok(())
    }

    /// Square roots of the covariance diagonal, when a covariance is set.
    pub fn std_errors(&self) -> Option<Vec<f64>> {
        self.covariance
            .as_ref()
            .map(|c| {
                (0..self.dim)
                    .map(|j| libm::sqrt(c.get(j, j).max(0.0)))
                    .collect()
            })
    }
}

/// Per-record influence rows φᵢ = Σₖ wᵢₖ U(k, i; β), row-major n×d.
pub fn influence_matrix(
    data: &Dataset,
    f: &dyn EstimatingFunction,
    w: &WeightScheme,
    beta: &[f64],
) -> Vec<f64> {
    let d = f.dim();
    let n = w.n();
    let mut rows = vec![0.0; n * d];
    let mut tmp = vec![0.0; d];
    for i in 0..n {
        let out = &mut rows[i * d..(i + 1) * d];
        for (level, &wk) in w.row(i).iter().enumerate() {
            if wk != 0.0 {
                f.eval(data, i, level, beta, &mut tmp);
                for (o, &t) in out.iter_mut().zip(tmp.iter()) {
                    *o += wk * t;
                }
            }
        }
    }
    rows
}

/// Shared fitting path: solve, then freeze the influence rows at β̂.
pub fn estimate_with_weights(
    data: &Dataset,
    f: &dyn EstimatingFunction,
    w: &WeightScheme,
    method: Method,
    cfg: &SolverConfig,
) -> Result<EstimateResult> {
    let sol = solve(data, f, w, cfg)?;
    let influence = influence_matrix(data, f, w, &sol.beta);
    Ok(EstimateResult::new(
        method,
        sol.beta,
        sol.diagnostics,
        influence,
        w.n(),
    ))
}

/// Perturbation-corrected estimator from the released levels and the public
/// mechanism.
pub fn proposed_estimate(
    data: &Dataset,
    p: &TransitionMatrix,
    f: &dyn EstimatingFunction,
    cfg: &SolverConfig,
) -> Result<EstimateResult> {
    let q = p.invert()?;
    let w = WeightScheme::inverse_transition(data, &q)?;
    estimate_with_weights(data, f, &w, Method::Proposed, cfg)
}

/// Benchmark estimator from the original levels (custodian side only).
pub fn oracle_estimate(
    data: &Dataset,
    f: &dyn EstimatingFunction,
    cfg: &SolverConfig,
) -> Result<EstimateResult> {
    let w = WeightScheme::indicator_original(data)?;
    estimate_with_weights(data, f, &w, Method::Oracle, cfg)
}

/// Uncorrected estimator that treats released levels as the truth.
pub fn naive_estimate(
    data: &Dataset,
    f: &dyn EstimatingFunction,
    cfg: &SolverConfig,
) -> Result<EstimateResult> {
    let w = WeightScheme::indicator_perturbed(data)?;
    estimate_with_weights(data, f, &w, Method::Naive, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estfun::{build_custom, build_logistic, build_mean, EstimandSpec};
    use crate::rng::{stream_rng, uniform01};
    use alloc::boxed::Box;

    fn example_p() -> TransitionMatrix {
        TransitionMatrix::from_rows(&[vec![0.8, 0.1], vec![0.2, 0.9]]).unwrap()
    }

    #[test]
    fn frozen_mean_example_proposed_and_naive() {
        // Six of ten records released at level 1: naive mean is 0.6; the
        // corrected mean is 4/7 (hand computation via the inverse columns).
        let mut d = Dataset::new(2).unwrap();
        d.set_perturbed_levels(vec![1, 1, 1, 0, 1, 0, 1, 0, 1, 0]).unwrap();
        let f = build_mean(2);
        let cfg = SolverConfig::default();

        let prop = proposed_estimate(&d, &example_p(), &f, &cfg).unwrap();
        assert_eq!(prop.method(), Method::Proposed);
        assert!((prop.beta()[0] - 4.0 / 7.0).abs() < 1e-12);

        let naive = naive_estimate(&d, &f, &cfg).unwrap();
        assert!((naive.beta()[0] - 0.6).abs() < 1e-12);

        // Influence rows at the fit: q_{2,released+1} - beta.
        assert!((prop.influence(0)[0] - (8.0 / 7.0 - 4.0 / 7.0)).abs() < 1e-12);
        assert!((prop.influence(3)[0] - (-2.0 / 7.0 - 4.0 / 7.0)).abs() < 1e-12);
        // Influence rows average to (numerically) zero at the root.
        let sum: f64 = (0..10).map(|i| prop.influence(i)[0]).sum();
        assert!(sum.abs() < 1e-10);
    }

    #[test]
    fn oracle_mean_is_the_sample_mean() {
        let mut d = Dataset::new(2).unwrap();
        d.set_original_levels(vec![0, 1, 1, 1]).unwrap();
        let f = build_mean(2);
        let fit = oracle_estimate(&d, &f, &SolverConfig::default()).unwrap();
        assert!((fit.beta()[0] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn identity_mechanism_collapses_all_three() {
        let n = 60;
        let mut rng = stream_rng(5, 0);
        let x: Vec<f64> = (0..n).map(|_| 2.0 * uniform01(&mut rng) - 1.0).collect();
        let y: Vec<usize> = x
            .iter()
            .map(|&xi| usize::from(uniform01(&mut rng) < crate::math::expit(0.5 + xi)))
            .collect();
        let mut d = Dataset::new(2).unwrap();
        d.push_column("x", x).unwrap();
        d.set_original_levels(y.clone()).unwrap();
        d.set_perturbed_levels(y).unwrap();

        let spec = EstimandSpec::logistic_response("s", &["x"], 2);
        let f = build_logistic(&spec, &d).unwrap();
        let p = TransitionMatrix::identity(2).unwrap();
        let cfg = SolverConfig::default();

        let a = proposed_estimate(&d, &p, &f, &cfg).unwrap();
        let b = oracle_estimate(&d, &f, &cfg).unwrap();
        let c = naive_estimate(&d, &f, &cfg).unwrap();
        for j in 0..2 {
            assert!((a.beta()[j] - b.beta()[j]).abs() < 1e-8);
            assert!((b.beta()[j] - c.beta()[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn level_free_function_shows_no_correction_at_all() {
        // If U never looks at the sensitive level, the weighted sums collapse
        // (each weight row sums to 1) and all three estimators coincide
        // exactly; the influence rows equal the plain U values.
        let mut d = Dataset::new(2).unwrap();
        d.push_column("x", vec![0.2, 1.4, -0.7, 0.9, 0.4]).unwrap();
        d.set_original_levels(vec![0, 1, 0, 1, 1]).unwrap();
        d.set_perturbed_levels(vec![1, 1, 0, 0, 1]).unwrap();

        let level_free = |data: &Dataset, i: usize, b: &[f64], out: &mut [f64]| {
            out[0] = data.values("x").unwrap()[i] - b[0];
        };
        let f = build_custom(
            2,
            1,
            vec![Box::new(level_free), Box::new(level_free)],
        )
        .unwrap();
        let cfg = SolverConfig::default();

        let a = proposed_estimate(&d, &example_p(), &f, &cfg).unwrap();
        let b = oracle_estimate(&d, &f, &cfg).unwrap();
        let c = naive_estimate(&d, &f, &cfg).unwrap();
        // The solver stops at residual 1e-10 with finite-difference slopes,
        // so equality holds to that order, not to machine precision.
        let mean_x = (0.2 + 1.4 - 0.7 + 0.9 + 0.4) / 5.0;
        assert!((a.beta()[0] - mean_x).abs() < 1e-9);
        assert!((a.beta()[0] - b.beta()[0]).abs() < 1e-9);
        assert!((b.beta()[0] - c.beta()[0]).abs() < 1e-9);

        for i in 0..5 {
            let u = d.values("x").unwrap()[i] - a.beta()[0];
            assert!((a.influence(i)[0] - u).abs() < 1e-14);
        }
    }

    #[test]
    fn covariance_attachment_and_std_errors() {
        let mut d = Dataset::new(2).unwrap();
        d.set_perturbed_levels(vec![0, 1, 1, 0]).unwrap();
        let f = build_mean(2);
        let mut fit = naive_estimate(&d, &f, &SolverConfig::default()).unwrap();
        assert!(fit.covariance().is_none());
        assert!(fit.std_errors().is_none());

        let bad = SquareMat::identity(2);
        assert!(matches!(
            fit.set_covariance(bad),
            Err(Error::DimensionMismatch { .. })
        ));

        let mut cov = SquareMat::zeros(1);
        cov.set(0, 0, 0.04);
        fit.set_covariance(cov).unwrap();
        assert_eq!(fit.std_errors().unwrap(), vec![0.2]);
    }
}
