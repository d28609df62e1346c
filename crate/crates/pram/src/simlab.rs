//! Monte-Carlo study engine: generates data under two designs, perturbs the
//! sensitive variable, runs the requested estimators over R replicates per
//! cell, and aggregates Bias / SD / SE / CP / MSE / RE into a tidy table.
//!
//! Designs (K = 2 throughout):
//!   A — sensitive response: X ~ Normal(0.5, 1), Y | X ~ Bernoulli(expit(−1
//!       + 1.5·X)); the released column is a perturbed Y; the estimand is
//!       the logistic regression of Y on X, truth β = (−1, 1.5).
//!   B — sensitive covariate: X ~ Bernoulli(0.5), Y | X ~ Normal(−1 + X, 1);
//!       the released column is a perturbed X; the estimand is the linear
//!       regression of Y on X, truth β = (−1, 1).
//!
//! Cells: the `1` scenarios (A1, B1) sweep sample size at a few symmetric
//! retention levels p00 = p11; the `2` scenarios (A2, B2) fix n = 1000 and
//! sweep a (p00, p11) grid. Everything is deterministic given the master
//! seed — replicate streams are keyed by (master seed, cell index,
//! replicate index), and aggregation runs in fixed order — so the metrics
//! are byte-identical no matter how many threads run the replicates.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use pram_core::estfun::build_estimating_function;
use pram_core::estimators::estimate_with_weights;
use pram_core::inference::{
    confidence_intervals, plugin_variance_with_weights, resample_variance_with_weights,
    MIN_RESAMPLES,
};
use pram_core::math::expit;
use pram_core::mechanism::perturb_levels;
use pram_core::model_dependent::{fit_latent_model, model_dependent_estimate};
use pram_core::rng::{derive_seed, stream_rng, uniform01, RngCore};
use pram_core::{
    Dataset, EstimandSpec, LatentFamily, LatentModelSpec, Method, MultiplierLaw, ResampleConfig,
    ReversionMatrix, SolverConfig, TransitionMatrix, WeightScheme,
};

use crate::error::{Error, Result};
use crate::io::SCHEMA_VERSION;

// Stream tags separating the three RNG uses of a replicate.
const TAG_DGP: u64 = 1;
const TAG_PERTURB: u64 = 2;
const TAG_RESAMPLE: u64 = 3;

/// Which simulation design to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScenarioId {
    A1,
    A2,
    B1,
    B2,
}

impl ScenarioId {
    pub fn label(&self) -> &'static str {
        match self {
            ScenarioId::A1 => "A1",
            ScenarioId::A2 => "A2",
            ScenarioId::B1 => "B1",
            ScenarioId::B2 => "B2",
        }
    }

    /// True parameter vector of the design's estimand.
    pub fn beta_true(&self) -> Vec<f64> {
        if self.is_a() {
            vec![-1.0, 1.5]
        } else {
            vec![-1.0, 1.0]
        }
    }

    pub fn is_a(&self) -> bool {
        matches!(self, ScenarioId::A1 | ScenarioId::A2)
    }

    /// Grid scenarios fix n = 1000 and sweep (p00, p11) independently.
    pub fn is_grid(&self) -> bool {
        matches!(self, ScenarioId::A2 | ScenarioId::B2)
    }

    /// The estimand the study targets, over the replicate datasets'
    /// column names.
    pub fn estimand(&self) -> EstimandSpec {
        if self.is_a() {
            EstimandSpec::logistic_response("y", &["x"], 2)
        } else {
            EstimandSpec::linear_with_sensitive_covariate("y", &["x"], "x", 2)
        }
    }

    /// Latent conditional model for the model-dependent competitors: the
    /// sensitive variable regressed on the non-sensitive one.
    fn latent_spec(&self, family: LatentFamily) -> LatentModelSpec {
        let predictor = if self.is_a() { "x" } else { "y" };
        LatentModelSpec::new(family, &[predictor])
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A1" => Ok(ScenarioId::A1),
            "A2" => Ok(ScenarioId::A2),
            "B1" => Ok(ScenarioId::B1),
            "B2" => Ok(ScenarioId::B2),
            other => Err(Error::parse(format!(
                "unknown scenario '{other}' (expected A1, A2, B1 or B2)"
            ))),
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// An estimator to run in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    /// Inverse-transition weighting of the estimating equation.
    Proposed,
    /// The unperturbed data (available only in simulation).
    Oracle,
    /// The released data treated as if unperturbed.
    Naive,
    /// Model-dependent, latent logistic regression with intercept.
    Model1,
    /// Model-dependent, latent logistic regression without intercept.
    Model2,
}

impl MethodChoice {
    pub fn label(&self) -> &'static str {
        match self {
            MethodChoice::Proposed => "proposed",
            MethodChoice::Oracle => "oracle",
            MethodChoice::Naive => "naive",
            MethodChoice::Model1 => "model1",
            MethodChoice::Model2 => "model2",
        }
    }

    pub fn all() -> Vec<MethodChoice> {
        vec![
            MethodChoice::Proposed,
            MethodChoice::Oracle,
            MethodChoice::Naive,
            MethodChoice::Model1,
            MethodChoice::Model2,
        ]
    }
}

impl FromStr for MethodChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "proposed" => Ok(MethodChoice::Proposed),
            "oracle" => Ok(MethodChoice::Oracle),
            "naive" => Ok(MethodChoice::Naive),
            "model1" | "m1" => Ok(MethodChoice::Model1),
            "model2" | "m2" => Ok(MethodChoice::Model2),
            other => Err(Error::parse(format!(
                "unknown method '{other}' (expected proposed, oracle, naive, model1 or model2)"
            ))),
        }
    }
}

/// Parse a comma-separated method list such as `proposed,oracle,naive`.
pub fn parse_methods(list: &str) -> Result<Vec<MethodChoice>> {
    let methods: Vec<MethodChoice> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse())
        .collect::<Result<_>>()?;
    if methods.is_empty() {
        return Err(Error::parse("no methods requested"));
    }
    Ok(methods)
}

/// Symmetric retention pairs p00 = p11 = p.
pub fn diagonal_pairs(ps: &[f64]) -> Vec<(f64, f64)> {
    ps.iter().map(|&p| (p, p)).collect()
}

/// Cartesian (p00, p11) grid over [lo, hi] with the given step. Values are
/// laid on a 1/1000 lattice so the emitted numbers print cleanly.
pub fn grid_pairs(lo: f64, hi: f64, step: f64) -> Result<Vec<(f64, f64)>> {
    if !(step > 0.0) || !(hi >= lo) {
        return Err(Error::parse(format!(
            "bad grid [{lo}, {hi}] step {step}: need step > 0 and hi >= lo"
        )));
    }
    let lo_m = (lo * 1000.0).round() as i64;
    let hi_m = (hi * 1000.0).round() as i64;
    let step_m = (step * 1000.0).round() as i64;
    if step_m == 0 {
        return Err(Error::parse(format!(
            "grid step {step} is below the 0.001 resolution"
        )));
    }
    let mut values = Vec::new();
    let mut v = lo_m;
    while v <= hi_m {
        values.push(v as f64 / 1000.0);
        v += step_m;
    }
    let mut pairs = Vec::new();
    for &p00 in &values {
        for &p11 in &values {
            pairs.push((p00, p11));
        }
    }
    Ok(pairs)
}

/// Full description of a study: design, cells, replicate budget, methods,
/// and seeding.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioId,
    /// Sample sizes to sweep (grid scenarios conventionally use one).
    pub n_values: Vec<usize>,
    /// (p00, p11) retention pairs to sweep.
    pub p_pairs: Vec<(f64, f64)>,
    /// Monte-Carlo replicates per cell.
    pub replicates: usize,
    /// Resamples per replicate for the proposed method's standard error.
    pub resamples: usize,
    /// Attach standard errors and coverage (proposed: multiplier
    /// resampling; oracle/naive: plugin sandwich). Disable for studies that
    /// only need point-estimate metrics — it is the dominant cost.
    pub with_se: bool,
    pub ci_level: f64,
    pub master_seed: u64,
    pub methods: Vec<MethodChoice>,
}

impl ScenarioConfig {
    /// The default sweeps: `1` scenarios cross n ∈ {1000, 1200, …, 2000}
    /// with p ∈ {0.75, 0.85, 0.95}; `2` scenarios fix n = 1000 and sweep
    /// the (p00, p11) grid over [0.75, 0.95] in steps of 0.05.
    pub fn table_defaults(scenario: ScenarioId) -> Self {
        let (n_values, p_pairs) = if scenario.is_grid() {
            (
                vec![1000],
                grid_pairs(0.75, 0.95, 0.05).expect("static grid bounds"),
            )
        } else {
            (
                vec![1000, 1200, 1400, 1600, 1800, 2000],
                diagonal_pairs(&[0.75, 0.85, 0.95]),
            )
        };
        Self {
            scenario,
            n_values,
            p_pairs,
            replicates: 500,
            resamples: 500,
            with_se: true,
            ci_level: 0.95,
            master_seed: 0,
            methods: MethodChoice::all(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() || self.p_pairs.is_empty() {
            return Err(Error::parse("empty cell list: need at least one n and one (p00, p11)"));
        }
        for &n in &self.n_values {
            if n < 100 {
                return Err(Error::parse(format!(
                    "sample size {n} is below the minimum of 100"
                )));
            }
        }
        for &(p00, p11) in &self.p_pairs {
            for p in [p00, p11] {
                if !(p > 0.5 && p <= 1.0) {
                    return Err(Error::parse(format!(
                        "retention probability {p} outside (0.5, 1]"
                    )));
                }
            }
        }
        if self.replicates < 1 {
            return Err(Error::parse("need at least one replicate"));
        }
        if self.methods.is_empty() {
            return Err(Error::parse("no methods requested"));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::parse(format!(
                "confidence level {} outside (0, 1)",
                self.ci_level
            )));
        }
        if self.with_se && self.resamples < MIN_RESAMPLES {
            return Err(Error::parse(format!(
                "{} resamples are too few for a stable standard error (minimum {MIN_RESAMPLES})",
                self.resamples
            )));
        }
        Ok(())
    }

    /// The cells of the sweep, in output order: p pairs outer, n inner.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(self.p_pairs.len() * self.n_values.len());
        for &(p00, p11) in &self.p_pairs {
            for &n in &self.n_values {
                out.push(Cell {
                    index: out.len(),
                    n,
                    p00,
                    p11,
                });
            }
        }
        out
    }
}

/// One (retention pair, sample size) point of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub n: usize,
    pub p00: f64,
    pub p11: f64,
}

impl Cell {
    /// The 2×2 release mechanism: column j holds Pr(release · | true j).
    pub fn transition(&self) -> Result<TransitionMatrix> {
        Ok(TransitionMatrix::from_rows(&[
            vec![self.p00, 1.0 - self.p11],
            vec![1.0 - self.p00, self.p11],
        ])?)
    }
}

/// One standard normal draw via Box–Muller (two uniforms per draw, for a
/// fixed consumption pattern).
fn standard_normal(rng: &mut impl RngCore) -> f64 {
    let u1 = uniform01(rng);
    let u2 = uniform01(rng);
    (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Draw one replicate dataset, carrying both the original and the released
/// sensitive column. Deterministic in (master seed, cell index, replicate).
pub fn generate_replicate(
    cfg: &ScenarioConfig,
    cell: &Cell,
    replicate: usize,
) -> Result<Dataset> {
    let p = cell.transition()?;
    let dgp_seed = derive_seed(
        cfg.master_seed,
        &[TAG_DGP, cell.index as u64, replicate as u64],
    );
    let perturb_seed = derive_seed(
        cfg.master_seed,
        &[TAG_PERTURB, cell.index as u64, replicate as u64],
    );
    let mut rng = stream_rng(dgp_seed, 0);
    let mut data = Dataset::new(2)?;
    if cfg.scenario.is_a() {
        let mut x = Vec::with_capacity(cell.n);
        let mut y = Vec::with_capacity(cell.n);
        for _ in 0..cell.n {
            let xi = 0.5 + standard_normal(&mut rng);
            let yi = usize::from(uniform01(&mut rng) < expit(-1.0 + 1.5 * xi));
            x.push(xi);
            y.push(yi);
        }
        data.push_column("x", x)?;
        data.set_original_levels(y)?;
    } else {
        let mut x = Vec::with_capacity(cell.n);
        let mut y = Vec::with_capacity(cell.n);
        for _ in 0..cell.n {
            let xi = usize::from(uniform01(&mut rng) < 0.5);
            let yi = -1.0 + xi as f64 + standard_normal(&mut rng);
            x.push(xi);
            y.push(yi);
        }
        data.push_column("y", y)?;
        data.set_original_levels(x)?;
    }
    let released = perturb_levels(data.require_original()?, &p, perturb_seed)?;
    data.set_perturbed_levels(released)?;
    Ok(data)
}

/// What one estimator produced on one replicate (None = failed: solver
/// error, non-convergence, degenerate latent fit, or variance failure).
#[derive(Debug, Clone)]
struct MethodSuccess {
    beta: Vec<f64>,
    se: Option<Vec<f64>>,
    covered: Option<Vec<bool>>,
}

fn attempt_method(
    choice: MethodChoice,
    cfg: &ScenarioConfig,
    data: &Dataset,
    f: &dyn pram_core::EstimatingFunction,
    p: &TransitionMatrix,
    q: &ReversionMatrix,
    resample_seed: u64,
) -> Option<MethodSuccess> {
    let solver_cfg = SolverConfig::default();
    let with_plugin_se = |mut est: pram_core::EstimateResult,
                          w: &WeightScheme|
     -> Option<MethodSuccess> {
        if !est.diagnostics().converged {
            return None;
        }
        let (se, covered) = if cfg.with_se {
            let cov = plugin_variance_with_weights(data, f, w, est.beta(), &solver_cfg).ok()?;
            est.set_covariance(cov).ok()?;
            (
                Some(est.std_errors()?),
                Some(coverage_flags(&est, cfg)?),
            )
        } else {
            (None, None)
        };
        Some(MethodSuccess {
            beta: est.beta().to_vec(),
            se,
            covered,
        })
    };
    match choice {
        MethodChoice::Proposed => {
            let w = WeightScheme::inverse_transition(data, q).ok()?;
            let mut est =
                estimate_with_weights(data, f, &w, Method::Proposed, &solver_cfg).ok()?;
            if !est.diagnostics().converged {
                return None;
            }
            let (se, covered) = if cfg.with_se {
                let rcfg = ResampleConfig {
                    resamples: cfg.resamples,
                    law: MultiplierLaw::Exponential,
                    seed: resample_seed,
                    failure_limit_percent: 5.0,
                };
                let rv =
                    resample_variance_with_weights(data, f, &w, est.beta(), &rcfg, &solver_cfg)
                        .ok()?;
                est.set_covariance(rv.covariance).ok()?;
                (
                    Some(est.std_errors()?),
                    Some(coverage_flags(&est, cfg)?),
                )
            } else {
                (None, None)
            };
            Some(MethodSuccess {
                beta: est.beta().to_vec(),
                se,
                covered,
            })
        }
        MethodChoice::Oracle => {
            let w = WeightScheme::indicator_original(data).ok()?;
            let est = estimate_with_weights(data, f, &w, Method::Oracle, &solver_cfg).ok()?;
            with_plugin_se(est, &w)
        }
        MethodChoice::Naive => {
            let w = WeightScheme::indicator_perturbed(data).ok()?;
            let est = estimate_with_weights(data, f, &w, Method::Naive, &solver_cfg).ok()?;
            with_plugin_se(est, &w)
        }
        MethodChoice::Model1 | MethodChoice::Model2 => {
            let family = if choice == MethodChoice::Model1 {
                LatentFamily::Logistic
            } else {
                LatentFamily::LogisticNoIntercept
            };
            let spec = cfg.scenario.latent_spec(family);
            let fit = fit_latent_model(data, p, &spec).ok()?;
            let est = model_dependent_estimate(data, p, f, &fit, &solver_cfg).ok()?;
            if !est.diagnostics().converged {
                return None;
            }
            Some(MethodSuccess {
                beta: est.beta().to_vec(),
                se: None,
                covered: None,
            })
        }
    }
}

fn coverage_flags(est: &pram_core::EstimateResult, cfg: &ScenarioConfig) -> Option<Vec<bool>> {
    let beta0 = cfg.scenario.beta_true();
    let ci = confidence_intervals(est, cfg.ci_level).ok()?;
    Some(
        ci.iter()
            .zip(&beta0)
            .map(|(&(lo, hi), &b0)| lo <= b0 && b0 <= hi)
            .collect(),
    )
}

/// All requested methods on one replicate (entries align with
/// `cfg.methods`).
fn run_replicate(
    cfg: &ScenarioConfig,
    cell: &Cell,
    replicate: usize,
    p: &TransitionMatrix,
    q: &ReversionMatrix,
) -> Result<Vec<Option<MethodSuccess>>> {
    let data = generate_replicate(cfg, cell, replicate)?;
    let estimand = cfg.scenario.estimand();
    let f = build_estimating_function(&estimand, &data)?;
    let resample_seed = derive_seed(
        cfg.master_seed,
        &[TAG_RESAMPLE, cell.index as u64, replicate as u64],
    );
    Ok(cfg
        .methods
        .iter()
        .map(|&m| attempt_method(m, cfg, &data, f.as_ref(), p, q, resample_seed))
        .collect())
}

/// Aggregated metrics of one method in one cell. Undefined entries (SD and
/// CP need ≥ 2 successful replicates; SE/CP need standard errors; every
/// metric needs ≥ 1 success) are None and serialize as null / empty CSV
/// cells.
#[derive(Debug, Clone, Serialize)]
pub struct CellMetrics {
    pub scenario: ScenarioId,
    pub p00: f64,
    pub p11: f64,
    pub n: usize,
    pub method: MethodChoice,
    /// Successful replicates (the denominator of every metric).
    pub used: usize,
    /// Replicates where this method failed (solver, variance, or latent
    /// fit); `used + failures = R`.
    pub failures: usize,
    pub bias: Vec<Option<f64>>,
    pub sd: Vec<Option<f64>>,
    pub se: Vec<Option<f64>>,
    pub cp: Vec<Option<f64>>,
    pub mse: Vec<Option<f64>>,
    /// MSE ratio against model1 in the same cell, when model1 ran.
    pub re_vs_model1: Vec<Option<f64>>,
}

/// The study output: configuration echo plus one row per cell × method.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsTable {
    pub schema: u32,
    pub scenario: ScenarioId,
    pub beta_true: Vec<f64>,
    pub replicates: usize,
    pub resamples: usize,
    pub with_se: bool,
    pub ci_level: f64,
    pub master_seed: u64,
    pub cells: Vec<CellMetrics>,
}

impl MetricsTable {
    /// The row for one (p00, p11, n, method) combination.
    pub fn find(&self, p00: f64, p11: f64, n: usize, method: MethodChoice) -> Option<&CellMetrics> {
        self.cells.iter().find(|c| {
            c.method == method && c.n == n && c.p00 == p00 && c.p11 == p11
        })
    }

    /// Tidy CSV: one row per cell × method × coordinate, floats in
    /// shortest-roundtrip form, undefined metrics as empty cells.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(
            "scenario,p00,p11,n,method,coordinate,bias,sd,se,cp,mse,re_vs_model1,failures,replicates_used\n",
        );
        for cell in &self.cells {
            for j in 0..self.beta_true.len() {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    cell.scenario.label(),
                    cell.p00,
                    cell.p11,
                    cell.n,
                    cell.method.label(),
                    j,
                    fmt_opt(cell.bias[j]),
                    fmt_opt(cell.sd[j]),
                    fmt_opt(cell.se[j]),
                    fmt_opt(cell.cp[j]),
                    fmt_opt(cell.mse[j]),
                    fmt_opt(cell.re_vs_model1[j]),
                    cell.failures,
                    cell.used
                ));
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|source| Error::Io {
            path: Some(path.to_path_buf()),
            source,
        })
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

fn aggregate(
    cfg: &ScenarioConfig,
    cell: &Cell,
    method: MethodChoice,
    successes: &[&MethodSuccess],
    beta0: &[f64],
) -> CellMetrics {
    let d = beta0.len();
    let used = successes.len();
    let failures = cfg.replicates - used;
    let mut bias = vec![None; d];
    let mut sd = vec![None; d];
    let mut se = vec![None; d];
    let mut cp = vec![None; d];
    let mut mse = vec![None; d];
    if used >= 1 {
        for j in 0..d {
            let mut sum = 0.0;
            let mut sq_err = 0.0;
            for s in successes {
                sum += s.beta[j];
                sq_err += (s.beta[j] - beta0[j]) * (s.beta[j] - beta0[j]);
            }
            let mean = sum / used as f64;
            bias[j] = Some(mean - beta0[j]);
            mse[j] = Some(sq_err / used as f64);
            if used >= 2 {
                let mut sq_dev = 0.0;
                for s in successes {
                    sq_dev += (s.beta[j] - mean) * (s.beta[j] - mean);
                }
                sd[j] = Some((sq_dev / (used - 1) as f64).sqrt());
            }
        }
        if successes.iter().all(|s| s.se.is_some()) {
            for j in 0..d {
                let mut sum_se = 0.0;
                for s in successes {
                    sum_se += s.se.as_ref().expect("checked above")[j];
                }
                se[j] = Some(sum_se / used as f64);
            }
            if used >= 2 {
                for j in 0..d {
                    let mut hits = 0usize;
                    for s in successes {
                        if s.covered.as_ref().expect("set alongside se")[j] {
                            hits += 1;
                        }
                    }
                    cp[j] = Some(hits as f64 / used as f64);
                }
            }
        }
    }
    CellMetrics {
        scenario: cfg.scenario,
        p00: cell.p00,
        p11: cell.p11,
        n: cell.n,
        method,
        used,
        failures,
        bias,
        sd,
        se,
        cp,
        mse,
        re_vs_model1: vec![None; d],
    }
}

/// Run the whole sweep: every cell × replicate × method, replicates in
/// parallel, aggregation in fixed order.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsTable> {
    cfg.validate()?;
    let beta0 = cfg.scenario.beta_true();
    let d = beta0.len();
    let mut rows: Vec<CellMetrics> = Vec::new();
    for cell in cfg.cells() {
        let p = cell.transition()?;
        let q = p.invert()?;
        let outcomes: Vec<Result<Vec<Option<MethodSuccess>>>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| run_replicate(cfg, &cell, r, &p, &q))
            .collect();
        let outcomes: Vec<Vec<Option<MethodSuccess>>> =
            outcomes.into_iter().collect::<Result<_>>()?;
        let first = rows.len();
        for (mi, &method) in cfg.methods.iter().enumerate() {
            let successes: Vec<&MethodSuccess> = outcomes
                .iter()
                .filter_map(|rep| rep[mi].as_ref())
                .collect();
            rows.push(aggregate(cfg, &cell, method, &successes, &beta0));
        }
        // Efficiency against model1, when it ran in this cell.
        let m1_mse = cfg
            .methods
            .iter()
            .position(|&m| m == MethodChoice::Model1)
            .map(|mi| rows[first + mi].mse.clone());
        if let Some(m1_mse) = m1_mse {
            for row in rows[first..].iter_mut() {
                for j in 0..d {
                    row.re_vs_model1[j] = match (row.mse[j], m1_mse[j]) {
                        (Some(num), Some(den)) if den > 0.0 => Some(num / den),
                        _ => None,
                    };
                }
            }
        }
    }
    Ok(MetricsTable {
        schema: SCHEMA_VERSION,
        scenario: cfg.scenario,
        beta_true: beta0,
        replicates: cfg.replicates,
        resamples: cfg.resamples,
        with_se: cfg.with_se,
        ci_level: cfg.ci_level,
        master_seed: cfg.master_seed,
        cells: rows,
    })
}

/// Per-cell efficiency of `numerator` against `denominator`:
/// componentwise MSE ratios plus the ratio of summed MSEs.
#[derive(Debug, Clone, Serialize)]
pub struct RelativeEfficiency {
    pub p00: f64,
    pub p11: f64,
    pub n: usize,
    pub per_coordinate: Vec<f64>,
    pub summed: f64,
}

pub fn relative_efficiency(
    table: &MetricsTable,
    numerator: MethodChoice,
    denominator: MethodChoice,
) -> Result<Vec<RelativeEfficiency>> {
    let mut out = Vec::new();
    for num_row in table.cells.iter().filter(|c| c.method == numerator) {
        let den_row = table
            .find(num_row.p00, num_row.p11, num_row.n, denominator)
            .ok_or_else(|| {
                Error::parse(format!(
                    "method '{}' missing from cell (p00={}, p11={}, n={})",
                    denominator.label(),
                    num_row.p00,
                    num_row.p11,
                    num_row.n
                ))
            })?;
        let d = table.beta_true.len();
        let mut per_coordinate = Vec::with_capacity(d);
        let mut num_sum = 0.0;
        let mut den_sum = 0.0;
        for j in 0..d {
            let (num, den) = match (num_row.mse[j], den_row.mse[j]) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::parse(format!(
                        "MSE undefined in cell (p00={}, p11={}, n={}) — no successful replicates",
                        num_row.p00, num_row.p11, num_row.n
                    )))
                }
            };
            if den == 0.0 {
                return Err(Error::ZeroDenominator {
                    context: format!(
                        "MSE of '{}' is zero in cell (p00={}, p11={}, n={}), coordinate {j}",
                        denominator.label(),
                        num_row.p00,
                        num_row.p11,
                        num_row.n
                    ),
                });
            }
            per_coordinate.push(num / den);
            num_sum += num;
            den_sum += den;
        }
        if den_sum == 0.0 {
            return Err(Error::ZeroDenominator {
                context: format!(
                    "summed MSE of '{}' is zero in cell (p00={}, p11={}, n={})",
                    denominator.label(),
                    num_row.p00,
                    num_row.p11,
                    num_row.n
                ),
            });
        }
        out.push(RelativeEfficiency {
            p00: num_row.p00,
            p11: num_row.p11,
            n: num_row.n,
            per_coordinate,
            summed: num_sum / den_sum,
        });
    }
    if out.is_empty() {
        return Err(Error::parse(format!(
            "method '{}' not present in the table",
            numerator.label()
        )));
    }
    Ok(out)
}
