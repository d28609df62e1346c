//! Estimating functions U(s, x; β) ∈ ℝᵈ whose population zero defines the
//! parameter of interest.
//!
//! The one contract everything downstream relies on: `eval` takes an
//! arbitrary *hypothetical* level for the sensitive variable and never reads
//! the stored sensitive column. Estimators work by combining evaluations at
//! every level k with per-record weights — the indicator of the observed
//! level reproduces a classical estimator, a column of P⁻¹ undoes the
//! perturbation — so the function itself must be a pure formula in
//! (level, covariates, β).
//!
//! Built-ins cover the mean of the sensitive variable, logistic regression
//! and linear regression (with the sensitive variable as response or as a
//! covariate); `build_custom` accepts one closure per level for anything
//! else.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::math::expit;

/// Whether the sensitive variable plays response or covariate in the
/// estimand formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitiveRole {
    Response,
    Covariate,
}

/// Which built-in estimand to set up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimandKind {
    /// Mean of the sensitive variable: U = s - β, d = 1.
    Mean,
    /// Logistic-regression score: U = (y - expit(βᵀx̃)) x̃.
    Logistic,
    /// Least-squares score: U = (y - βᵀx̃) x̃.
    Linear,
}

/// Declarative description of an estimand over named dataset columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimandSpec {
    pub kind: EstimandKind,
    /// Response column name. When the sensitive variable is the response this
    /// must equal `sensitive_column`.
    pub response: String,
    /// Design columns in order (intercept not included here). When the
    /// sensitive variable is a covariate its name appears in this list and
    /// that slot is filled with the hypothetical level at evaluation time.
    pub covariates: Vec<String>,
    pub sensitive_column: String,
    pub sensitive_role: SensitiveRole,
    /// Number of levels K of the sensitive variable.
    pub levels: usize,
    /// Prepend an intercept term to the design (ignored by `Mean`).
    pub intercept: bool,
}

impl EstimandSpec {
    /// Mean of the sensitive variable.
    pub fn mean(sensitive_column: &str, levels: usize) -> Self {
        Self {
            kind: EstimandKind::Mean,
            response: sensitive_column.to_string(),
            covariates: Vec::new(),
            sensitive_column: sensitive_column.to_string(),
            sensitive_role: SensitiveRole::Response,
            levels,
            intercept: false,
        }
    }

    /// Logistic regression of the sensitive variable on named covariates.
    pub fn logistic_response(sensitive_column: &str, covariates: &[&str], levels: usize) -> Self {
        Self {
            kind: EstimandKind::Logistic,
            response: sensitive_column.to_string(),
            covariates: covariates.iter().map(|c| c.to_string()).collect(),
            sensitive_column: sensitive_column.to_string(),
            sensitive_role: SensitiveRole::Response,
            levels,
            intercept: true,
        }
    }

    /// Linear regression of a numeric response on covariates that include
    /// the sensitive variable.
    pub fn linear_with_sensitive_covariate(
        response: &str,
        covariates: &[&str],
        sensitive_column: &str,
        levels: usize,
    ) -> Self {
        Self {
            kind: EstimandKind::Linear,
            response: response.to_string(),
            covariates: covariates.iter().map(|c| c.to_string()).collect(),
            sensitive_column: sensitive_column.to_string(),
            sensitive_role: SensitiveRole::Covariate,
            levels,
            intercept: true,
        }
    }
}

/// A d-dimensional estimating function over (hypothetical level, record, β).
pub trait EstimatingFunction: Send + Sync {
    /// Dimension d of U (and of β).
    fn dim(&self) -> usize;

    /// Number of levels K the sensitive variable can take.
    fn levels(&self) -> usize;

    /// Write U(s = level, record; β) into `out` (length d). `level` is a
    /// hypothetical value — implementations must not read the stored
    /// sensitive column.
    fn eval(&self, data: &Dataset, record: usize, level: usize, beta: &[f64], out: &mut [f64]);

    /// Write ∂U/∂βᵀ (d×d, column-major: out[c*d + r] = ∂U_r/∂β_c) into `out`
    /// and return true, or return false when no analytic form is available
    /// (the solver then falls back to finite differences of the aggregated
    /// residual).
    fn jacobian(
        &self,
        _data: &Dataset,
        _record: usize,
        _level: usize,
        _beta: &[f64],
        _out: &mut [f64],
    ) -> bool {
        false
    }
}

/// One design-vector entry.
#[derive(Debug, Clone, Copy)]
enum Term {
    Intercept,
    Column(usize),
    /// The hypothetical sensitive level, as a float.
    SensitiveLevel,
}

#[derive(Debug, Clone, Copy)]
enum ResponseSource {
    SensitiveLevel,
    Column(usize),
}

/// Shared regression plumbing: a design row and a response per record.
#[derive(Debug, Clone)]
struct Design {
    terms: Vec<Term>,
    response: ResponseSource,
    levels: usize,
}

impl Design {
    #[inline]
    fn x(&self, data: &Dataset, record: usize, level: usize, t: usize) -> f64 {
        match self.terms[t] {
            Term::Intercept => 1.0,
            Term::Column(c) => data.column_values(c)[record],
            Term::SensitiveLevel => level as f64,
        }
    }

    #[inline]
    fn y(&self, data: &Dataset, record: usize, level: usize) -> f64 {
        match self.response {
            ResponseSource::SensitiveLevel => level as f64,
            ResponseSource::Column(c) => data.column_values(c)[record],
        }
    }

    #[inline]
    fn eta(&self, data: &Dataset, record: usize, level: usize, beta: &[f64]) -> f64 {
        let mut eta = 0.0;
        for (t, &b) in beta.iter().enumerate() {
            eta += b * self.x(data, record, level, t);
        }
        eta
    }

    /// out[j] = scale * x_j.
    #[inline]
    fn scaled_design(&self, data: &Dataset, record: usize, level: usize, scale: f64, out: &mut [f64]) {
        for (t, o) in out.iter_mut().enumerate() {
            *o = scale * self.x(data, record, level, t);
        }
    }

    /// out = factor * x x̃ᵀ (column-major d×d).
    #[inline]
    fn scaled_outer(&self, data: &Dataset, record: usize, level: usize, factor: f64, out: &mut [f64]) {
        let d = self.terms.len();
        for c in 0..d {
            let xc = self.x(data, record, level, c);
            for r in 0..d {
                out[c * d + r] = factor * self.x(data, record, level, r) * xc;
            }
        }
    }

    fn build(spec: &EstimandSpec, data: &Dataset) -> Result<Self> {
        if spec.levels != data.levels() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "estimand declares {} levels, dataset has {}",
                    spec.levels,
                    data.levels()
                ),
            });
        }
        let response = match spec.sensitive_role {
            SensitiveRole::Response => {
                if spec.response != spec.sensitive_column {
                    return Err(Error::InvalidConfig {
                        context: format!(
                            "sensitive variable is the response, but response '{}' differs from sensitive column '{}'",
                            spec.response, spec.sensitive_column
                        ),
                    });
                }
                ResponseSource::SensitiveLevel
            }
            SensitiveRole::Covariate => {
                if spec.response == spec.sensitive_column {
                    return Err(Error::InvalidConfig {
                        context: "sensitive variable declared as covariate but named as response"
                            .to_string(),
                    });
                }
                ResponseSource::Column(data.require_column(&spec.response)?)
            }
        };
        let mut terms = Vec::new();
        if spec.intercept {
            terms.push(Term::Intercept);
        }
        let mut saw_sensitive = false;
        for name in &spec.covariates {
            if name == &spec.sensitive_column {
                if spec.sensitive_role == SensitiveRole::Response {
                    return Err(Error::InvalidConfig {
                        context: "sensitive variable cannot be both response and covariate".to_string(),
                    });
                }
                saw_sensitive = true;
                terms.push(Term::SensitiveLevel);
            } else {
                terms.push(Term::Column(data.require_column(name)?));
            }
        }
        if spec.sensitive_role == SensitiveRole::Covariate && !saw_sensitive {
            return Err(Error::InvalidConfig {
                context: format!(
                    "sensitive column '{}' has role covariate but is not among the covariates",
                    spec.sensitive_column
                ),
            });
        }
        if terms.is_empty() {
            return Err(Error::InvalidConfig {
                context: "estimand has an empty design (no intercept, no covariates)".to_string(),
            });
        }
        Ok(Self {
            terms,
            response,
            levels: spec.levels,
        })
    }
}

/// U = s - β. The simplest estimand: the mean of the sensitive variable.
pub struct MeanFn {
    levels: usize,
}

impl EstimatingFunction for MeanFn {
    fn dim(&self) -> usize {
        1
    }

    fn levels(&self) -> usize {
        self.levels
    }

    fn eval(&self, _data: &Dataset, _record: usize, level: usize, beta: &[f64], out: &mut [f64]) {
        out[0] = level as f64 - beta[0];
    }

    fn jacobian(
        &self,
        _data: &Dataset,
        _record: usize,
        _level: usize,
        _beta: &[f64],
        out: &mut [f64],
    ) -> bool {
        out[0] = -1.0;
        true
    }
}

/// Logistic-regression score.
pub struct LogisticFn {
    design: Design,
}

impl EstimatingFunction for LogisticFn {
    fn dim(&self) -> usize {
        self.design.terms.len()
    }

    fn levels(&self) -> usize {
        self.design.levels
    }

    fn eval(&self, data: &Dataset, record: usize, level: usize, beta: &[f64], out: &mut [f64]) {
        let y = self.design.y(data, record, level);
        let mu = expit(self.design.eta(data, record, level, beta));
        self.design.scaled_design(data, record, level, y - mu, out);
    }

    fn jacobian(
        &self,
        data: &Dataset,
        record: usize,
        level: usize,
        beta: &[f64],
        out: &mut [f64],
    ) -> bool {
        let mu = expit(self.design.eta(data, record, level, beta));
        self.design
            .scaled_outer(data, record, level, -(mu * (1.0 - mu)), out);
        true
    }
}

/// Least-squares score.
pub struct LinearFn {
    design: Design,
}

impl EstimatingFunction for LinearFn {
    fn dim(&self) -> usize {
        self.design.terms.len()
    }

    fn levels(&self) -> usize {
        self.design.levels
    }

    fn eval(&self, data: &Dataset, record: usize, level: usize, beta: &[f64], out: &mut [f64]) {
        let y = self.design.y(data, record, level);
        let resid = y - self.design.eta(data, record, level, beta);
        self.design.scaled_design(data, record, level, resid, out);
    }

    fn jacobian(
        &self,
        data: &Dataset,
        record: usize,
        level: usize,
        _beta: &[f64],
        out: &mut [f64],
    ) -> bool {
        self.design.scaled_outer(data, record, level, -1.0, out);
        true
    }
}

/// Closure type for one level of a custom estimating function: arguments are
/// (data, record, β, out).
pub type LevelFn = dyn Fn(&Dataset, usize, &[f64], &mut [f64]) + Send + Sync;

/// User-supplied estimating function: one closure per level.
pub struct CustomFn {
    levels: usize,
    dim: usize,
    fns: Vec<Box<LevelFn>>,
}

impl EstimatingFunction for CustomFn {
    fn dim(&self) -> usize {
        self.dim
    }

    fn levels(&self) -> usize {
        self.levels
    }

    fn eval(&self, data: &Dataset, record: usize, level: usize, beta: &[f64], out: &mut [f64]) {
        (self.fns[level])(data, record, beta, out);
    }
}

/// Build the mean estimand (sensitive variable as response).
pub fn build_mean(levels: usize) -> MeanFn {
    MeanFn { levels }
}

/// Build a logistic score from a spec. The response must be binary: K = 2
/// when the sensitive variable is the response, a 0/1 column otherwise.
pub fn build_logistic(spec: &EstimandSpec, data: &Dataset) -> Result<LogisticFn> {
    let design = Design::build(spec, data)?;
    match design.response {
        ResponseSource::SensitiveLevel => {
            if spec.levels != 2 {
                return Err(Error::NonBinaryResponse {
                    context: format!("sensitive response has {} levels", spec.levels),
                });
            }
        }
        ResponseSource::Column(c) => {
            for (row, &v) in data.column_values(c).iter().enumerate() {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::NonBinaryResponse {
                        context: format!("column '{}' row {row} = {v}", spec.response),
                    });
                }
            }
        }
    }
    Ok(LogisticFn { design })
}

/// Build a least-squares score from a spec.
pub fn build_linear(spec: &EstimandSpec, data: &Dataset) -> Result<LinearFn> {
    Ok(LinearFn {
        design: Design::build(spec, data)?,
    })
}

/// Build a custom estimating function from one closure per level, each
/// writing a d-vector.
pub fn build_custom(levels: usize, dim: usize, fns: Vec<Box<LevelFn>>) -> Result<CustomFn> {
    if levels < 2 {
        return Err(Error::InvalidConfig {
            context: format!("custom estimating function needs at least 2 levels, got {levels}"),
        });
    }
    if dim == 0 {
        return Err(Error::InvalidConfig {
            context: "custom estimating function needs dimension at least 1".to_string(),
        });
    }
    if fns.len() != levels {
        return Err(Error::MissingLevel {
            given: fns.len(),
            expected: levels,
        });
    }
    Ok(CustomFn { levels, dim, fns })
}

/// Build whichever estimating function a spec describes.
pub fn build_estimating_function(
    spec: &EstimandSpec,
    data: &Dataset,
) -> Result<Box<dyn EstimatingFunction>> {
    match spec.kind {
        EstimandKind::Mean => {
            if spec.sensitive_role != SensitiveRole::Response {
                return Err(Error::InvalidConfig {
                    context: "mean estimand requires the sensitive variable as response".to_string(),
                });
            }
            if !spec.covariates.is_empty() {
                return Err(Error::InvalidConfig {
                    context: "mean estimand takes no covariates".to_string(),
                });
            }
            if spec.levels != data.levels() {
                return Err(Error::DimensionMismatch {
                    context: format!(
                        "estimand declares {} levels, dataset has {}",
                        spec.levels,
                        data.levels()
                    ),
                });
            }
            Ok(Box::new(build_mean(spec.levels)))
        }
        EstimandKind::Logistic => Ok(Box::new(build_logistic(spec, data)?)),
        EstimandKind::Linear => Ok(Box::new(build_linear(spec, data)?)),
    }
}
