//! Model-dependent comparison estimators.
//!
//! Instead of inverting the mechanism algebraically, these estimators posit
//! a parametric latent model p(true level | predictors; θ) for the binary
//! sensitive variable, fit θ by maximizing the observed-data likelihood of
//! the released levels
//!
//!   Σᵢ log[ Σₖ P(releasedᵢ | true = k) · p(k | predictorsᵢ; θ) ],
//!
//! and then weight the estimating function by the Bayes posterior
//!
//!   p(true = k | releasedᵢ, predictorsᵢ) ∝ P(releasedᵢ | k) · p(k | predictorsᵢ; θ̂).
//!
//! Posterior rows are proper probability vectors (unlike the signed
//! inverse-transition rows), but the price is a model assumption: when the
//! latent family is wrong the estimator is biased, which is exactly the
//! contrast the estimator suite is built to expose (the no-intercept
//! variants are deliberately crippled families for that purpose).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estfun::EstimatingFunction;
use crate::estimators::{estimate_with_weights, EstimateResult, Method};
use crate::math::{expit, normal_cdf, normal_pdf, pairwise_block_sum};
use crate::mechanism::FrequencyVector;
use crate::solver::{solve, SolverConfig, WeightScheme};
use crate::transition::TransitionMatrix;

/// Mixture probabilities below this are treated as a degenerate fit.
const MIN_MIXTURE_PROBABILITY: f64 = 1e-12;

/// A fitted latent probability within this distance of 0 or 1 counts as
/// pinned when diagnosing degeneracy.
const PINNED_TOLERANCE: f64 = 1e-10;

/// Binary latent families. The no-intercept variants force the linear
/// predictor through the origin — a deliberately misspecified model used as
/// a comparison benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentFamily {
    Logistic,
    LogisticNoIntercept,
    Probit,
    ProbitNoIntercept,
}

impl LatentFamily {
    pub fn label(&self) -> &'static str {
        match self {
            LatentFamily::Logistic => "logistic",
            LatentFamily::LogisticNoIntercept => "logistic-no-intercept",
            LatentFamily::Probit => "probit",
            LatentFamily::ProbitNoIntercept => "probit-no-intercept",
        }
    }

    pub fn has_intercept(&self) -> bool {
        matches!(self, LatentFamily::Logistic | LatentFamily::Probit)
    }

    fn is_probit(&self) -> bool {
        matches!(self, LatentFamily::Probit | LatentFamily::ProbitNoIntercept)
    }

    /// Link CDF, its first and its second derivative at η.
    fn link(&self, eta: f64) -> (f64, f64, f64) {
        if self.is_probit() {
            let pdf = normal_pdf(eta);
            (normal_cdf(eta), pdf, -eta * pdf)
        } else {
            let mu = expit(eta);
            let d1 = mu * (1.0 - mu);
            (mu, d1, d1 * (1.0 - 2.0 * mu))
        }
    }
}

/// Which latent family to fit and which columns predict the true level.
/// Predictors may be empty for an intercept-bearing family (marginal model).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentModelSpec {
    pub family: LatentFamily,
    pub predictors: Vec<String>,
}

impl LatentModelSpec {
    pub fn new(family: LatentFamily, predictors: &[&str]) -> Self {
        Self {
            family,
            predictors: predictors.iter().map(|s| String::from(*s)).collect(),
        }
    }

    /// Length of θ: one slope per predictor plus the intercept if any.
    pub fn dim(&self) -> usize {
        self.predictors.len() + usize::from(self.family.has_intercept())
    }
}

/// Score of the observed-data log-likelihood, shaped as an estimating
/// function so the shared Newton engine can maximize the likelihood: the
/// `level` argument is the record's released level (selected by
/// indicator-perturbed weights), and U is ∂/∂θ of log Σₖ P(level|k)·p(k|x;θ).
struct LatentScore {
    family: LatentFamily,
    /// Row-major n×dim design rows x̃ᵢ (intercept first when present).
    design: Vec<f64>,
    dim: usize,
    levels: usize,
    /// p_entry[obs][k] = P(released = obs | true = k).
    p_entry: [[f64; 2]; 2],
}

impl LatentScore {
    fn row(&self, i: usize) -> &[f64] {
        &self.design[i * self.dim..(i + 1) * self.dim]
    }

    /// (mixture m, c·F′, c·F″) at record i given observed level, where
    /// c = P(obs|1) − P(obs|0) and m = P(obs|0) + c·F(η).
    fn pieces(&self, i: usize, observed: usize, theta: &[f64]) -> (f64, f64, f64) {
        let x = self.row(i);
        let eta: f64 = x.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
        let (f, d1, d2) = self.family.link(eta);
        let c = self.p_entry[observed][1] - self.p_entry[observed][0];
        let m = self.p_entry[observed][0] + c * f;
        (m, c * d1, c * d2)
    }
}

impl EstimatingFunction for LatentScore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn levels(&self) -> usize {
        self.levels
    }

    fn eval(&self, _data: &Dataset, record: usize, level: usize, theta: &[f64], out: &mut [f64]) {
        let (m, md1, _) = self.pieces(record, level, theta);
        let scale = md1 / m; // NaN/inf when m underflows: the solver rejects such steps.
        for (o, &x) in out.iter_mut().zip(self.row(record).iter()) {
            *o = scale * x;
        }
    }

    fn jacobian(
        &self,
        _data: &Dataset,
        record: usize,
        level: usize,
        theta: &[f64],
        out: &mut [f64],
    ) -> bool {
        let (m, md1, md2) = self.pieces(record, level, theta);
        let scale = md2 / m - (md1 / m) * (md1 / m);
        let x = self.row(record);
        let d = self.dim;
        for c in 0..d {
            for r in 0..d {
                out[c * d + r] = scale * x[r] * x[c];
            }
        }
        true
    }
}

/// A fitted latent model: parameters, per-record fitted probabilities of
/// true level 1, the log-likelihood, and the mechanism it was fitted
/// against.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDependentFit {
    spec: LatentModelSpec,
    theta: Vec<f64>,
    log_likelihood: f64,
    converged: bool,
    latent_prob: Vec<f64>,
    p: TransitionMatrix,
}

impl ModelDependentFit {
    pub fn spec(&self) -> &LatentModelSpec {
        &self.spec
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn n(&self) -> usize {
        self.latent_prob.len()
    }

    /// Fitted p(true level = 1 | predictors of record i; θ̂).
    pub fn latent_probability(&self, record: usize) -> f64 {
        self.latent_prob[record]
    }

    /// Bayes posterior over the true level of `record` given a released
    /// level: pr(k) ∝ P(observed | k) · p(k | predictors; θ̂).
    pub fn posterior(&self, record: usize, observed: usize) -> Result<FrequencyVector> {
        if observed >= 2 {
            return Err(Error::LevelOutOfRange {
                record,
                level: observed,
                levels: 2,
            });
        }
        let pi1 = self.latent_prob[record];
        let num0 = self.p.entry(observed, 0) * (1.0 - pi1);
        let num1 = self.p.entry(observed, 1) * pi1;
        let denom = num0 + num1;
        if !(denom > MIN_MIXTURE_PROBABILITY) {
            return Err(Error::DegenerateModel {
                context: format!(
                    "posterior denominator {denom} at record {record}, released level {observed}"
                ),
            });
        }
        FrequencyVector::proper(vec![num0 / denom, num1 / denom])
    }

    /// Posterior weight rows for every record at its actual released level.
    pub fn posterior_weights(&self, data: &Dataset) -> Result<WeightScheme> {
        let released = data.require_perturbed()?;
        if released.len() != self.latent_prob.len() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "fit covers {} records, dataset has {}",
                    self.latent_prob.len(),
                    released.len()
                ),
            });
        }
        let mut rows = Vec::with_capacity(2 * released.len());
        for (i, &obs) in released.iter().enumerate() {
            let post = self.posterior(i, obs)?;
            rows.extend_from_slice(post.values());
        }
        WeightScheme::posterior(rows, 2)
    }
}

fn build_design(data: &Dataset, spec: &LatentModelSpec) -> Result<(Vec<f64>, usize)> {
    let dim = spec.dim();
    if dim == 0 {
        return Err(Error::InvalidConfig {
            context: "latent model has no intercept and no predictors".into(),
        });
    }
    let n = data.n();
    let mut cols: Vec<&[f64]> = Vec::with_capacity(spec.predictors.len());
    for name in &spec.predictors {
        cols.push(data.values(name)?);
    }
    let mut design = Vec::with_capacity(n * dim);
    for i in 0..n {
        if spec.family.has_intercept() {
            design.push(1.0);
        }
        for col in &cols {
            design.push(col[i]);
        }
    }
    Ok((design, dim))
}

/// Fit the latent model by maximizing the observed-data likelihood of the
/// released levels through the known mechanism. Only binary (K = 2)
/// sensitive variables are supported — the built-in families are binary
/// regressions.
pub fn fit_latent_model(
    data: &Dataset,
    p: &TransitionMatrix,
    spec: &LatentModelSpec,
) -> Result<ModelDependentFit> {
    if data.levels() != p.levels() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "mechanism has {} levels, dataset has {}",
                p.levels(),
                data.levels()
            ),
        });
    }
    if data.levels() != 2 {
        return Err(Error::NonBinaryResponse {
            context: format!(
                "latent family {} is a binary regression; dataset has {} levels",
                spec.family.label(),
                data.levels()
            ),
        });
    }
    let released = data.require_perturbed()?.to_vec();
    let (design, dim) = build_design(data, spec)?;
    let score = LatentScore {
        family: spec.family,
        design,
        dim,
        levels: 2,
        p_entry: [
            [p.entry(0, 0), p.entry(0, 1)],
            [p.entry(1, 0), p.entry(1, 1)],
        ],
    };

    let w = WeightScheme::indicator_perturbed(data)?;
    let sol = solve(data, &score, &w, &SolverConfig::default())?;
    let theta = sol.beta;

    let n = data.n();
    let mut latent_prob = vec![0.0; n];
    let mut pinned = 0usize;
    let mut min_mixture = f64::INFINITY;
    for i in 0..n {
        let eta: f64 = score
            .row(i)
            .iter()
            .zip(theta.iter())
            .map(|(a, b)| a * b)
            .sum();
        let (f, _, _) = spec.family.link(eta);
        latent_prob[i] = f;
        if f < PINNED_TOLERANCE || f > 1.0 - PINNED_TOLERANCE {
            pinned += 1;
        }
        let (m, _, _) = score.pieces(i, released[i], &theta);
        min_mixture = min_mixture.min(m);
    }
    if min_mixture <= MIN_MIXTURE_PROBABILITY {
        return Err(Error::DegenerateModel {
            context: format!("smallest mixture probability {min_mixture} is numerically zero"),
        });
    }
    if pinned == n {
        return Err(Error::DegenerateModel {
            context: format!("all {n} fitted latent probabilities are pinned at 0 or 1"),
        });
    }

    let ll_terms = pairwise_block_sum(n, 1, |i, out| {
        let (m, _, _) = score.pieces(i, released[i], &theta);
        out[0] = libm::log(m);
    });

    Ok(ModelDependentFit {
        spec: spec.clone(),
        theta,
        log_likelihood: ll_terms[0],
        converged: sol.diagnostics.converged,
        latent_prob,
        p: p.clone(),
    })
}

/// Solve the estimating equation with the fitted posterior weight rows.
pub fn model_dependent_estimate(
    data: &Dataset,
    p: &TransitionMatrix,
    f: &dyn EstimatingFunction,
    fit: &ModelDependentFit,
    cfg: &SolverConfig,
) -> Result<EstimateResult> {
    if !fit.converged() {
        return Err(Error::InvalidConfig {
            context: "latent model fit did not converge; refusing to weight by its posterior"
                .into(),
        });
    }
    if p.levels() != fit.p.levels() || {
        let mut differs = false;
        for i in 0..p.levels() {
            for j in 0..p.levels() {
                if (p.entry(i, j) - fit.p.entry(i, j)).abs() > 1e-12 {
                    differs = true;
                }
            }
        }
        differs
    } {
        return Err(Error::InvalidConfig {
            context: "mechanism differs from the one the latent model was fitted against".into(),
        });
    }
    let w = fit.posterior_weights(data)?;
    estimate_with_weights(data, f, &w, Method::ModelDependent, cfg)
}
