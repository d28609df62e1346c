//! The `pram` binary: perturb a sensitive column, estimate parameters from
//! released data, attach variances, recover level frequencies, and run
//! Monte-Carlo studies.
//!
//! Exit codes: 0 success, 1 file/transport problems, 2 validation problems.
//! Every failure prints a single line `error[CODE]: message` to stderr.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use pram_core::estfun::build_estimating_function;
use pram_core::estimators::estimate_with_weights;
use pram_core::inference::{
    confidence_intervals, plugin_variance_with_weights, resample_variance_with_weights,
};
use pram_core::math::{max_abs, normal_quantile};
use pram_core::mechanism::{perturb_levels, project_to_simplex, recover_frequencies};
use pram_core::model_dependent::{fit_latent_model, model_dependent_estimate};
use pram_core::solver::residual;
use pram_core::{
    Dataset, EstimatingFunction, FrequencyVector, LatentFamily, LatentModelSpec, Method,
    MultiplierLaw, ResampleConfig, SolverConfig, SquareMat, TransitionMatrix, WeightScheme,
};

use crate::error::{Error, Result};
use crate::io::{
    covariance_to_rows, dataset_from_table, read_matrix_csv, recode_sidecar_path, write_json,
    EstimandConfig, EstimateReport, FrequencyReport, RecodeReport, SolveReport, Table,
    VarianceReport, SCHEMA_VERSION,
};
use crate::simlab::{
    diagonal_pairs, grid_pairs, parse_methods, run_scenario, MethodChoice, ScenarioConfig,
    ScenarioId,
};

#[derive(Debug, Parser)]
#[command(
    name = "pram",
    version,
    about = "Perturb categorical data through a known transition matrix and \
             estimate parameters consistently from the released files"
)]
pub struct Cli {
    /// Worker threads for parallel sections (0 = all logical cores).
    /// Outputs are byte-identical for every setting.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replace a sensitive column with draws through the transition matrix.
    Perturb(PerturbArgs),
    /// Solve the weighted estimating equation on released data.
    Estimate(EstimateArgs),
    /// Variance/standard errors for an estimate (refits unless --beta given).
    Variance(VarianceArgs),
    /// Undo the mechanism on the released level frequencies.
    RecoverFreq(RecoverFreqArgs),
    /// Monte-Carlo study of the estimators over a cell sweep.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// K×K transition matrix CSV, no header; entry (i,j) = Pr(release level
    /// i | true level j); columns sum to one.
    #[arg(long)]
    pub matrix: PathBuf,
    /// Name of the sensitive column to perturb.
    #[arg(long)]
    pub column: String,
    /// Seed for the release draws (env PRAM_SEED, default 0).
    #[arg(long, env = "PRAM_SEED")]
    pub seed: Option<u64>,
    /// Map string-coded levels to 0..K-1 first (lexicographic order) and
    /// write the mapping to <out>.recode.json.
    #[arg(long)]
    pub recode: bool,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

/// Inputs shared by `estimate` and `variance`.
#[derive(Debug, Args)]
pub struct InputArgs {
    /// Input CSV with a header row; the estimand's sensitive column holds
    /// the released levels.
    #[arg(long)]
    pub data: PathBuf,
    /// K×K transition matrix CSV the data was released through.
    #[arg(long)]
    pub matrix: PathBuf,
    /// Estimand description: path to a JSON file, or an inline JSON object.
    #[arg(long)]
    pub estimand: String,
    /// Column holding the original (pre-release) levels, when available;
    /// required by --method oracle.
    #[arg(long)]
    pub original_column: Option<String>,
    /// Estimator: proposed, oracle, naive, model1 or model2.
    #[arg(long, default_value = "proposed")]
    pub method: String,
    /// Latent family for model1/model2: logistic or probit.
    #[arg(long, default_value = "logistic")]
    pub latent_family: String,
    /// Drop the latent model's intercept (model2 implies this).
    #[arg(long)]
    pub latent_no_intercept: bool,
    /// Comma-separated predictor columns for the latent model (default:
    /// the estimand's non-sensitive columns).
    #[arg(long)]
    pub latent_predictors: Option<String>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Attach standard errors: none, resample, plugin or both.
    #[arg(long, default_value = "none")]
    pub with_se: String,
    /// Resamples M for --with-se resample.
    #[arg(short = 'M', long, default_value_t = 500)]
    pub resamples: usize,
    /// Seed for the resampling multipliers (env PRAM_SEED, default 0).
    #[arg(long, env = "PRAM_SEED")]
    pub seed: Option<u64>,
    /// Two-sided confidence level for the reported intervals.
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    /// Write the JSON report here (default: print to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VarianceArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Variance estimator: resample, plugin or both.
    #[arg(long, default_value = "resample")]
    pub se: String,
    /// Resamples M for the resample variance.
    #[arg(short = 'M', long, default_value_t = 500)]
    pub resamples: usize,
    /// Seed for the resampling multipliers (env PRAM_SEED, default 0).
    #[arg(long, env = "PRAM_SEED")]
    pub seed: Option<u64>,
    /// Two-sided confidence level for the reported intervals.
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    /// Evaluate the variance at this comma-separated β instead of refitting.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<String>,
    /// Write the JSON report here (default: print to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecoverFreqArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// K×K transition matrix CSV the data was released through.
    #[arg(long)]
    pub matrix: PathBuf,
    /// Released level column.
    #[arg(long)]
    pub column: String,
    /// Also report the Euclidean projection onto the probability simplex.
    #[arg(long)]
    pub project_simplex: bool,
    /// Write the JSON report here (default: print to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Study design: A1, A2, B1 or B2.
    #[arg(long)]
    pub scenario: String,
    /// Comma-separated sample sizes (default: the design's standard sweep).
    #[arg(long)]
    pub n: Option<String>,
    /// Comma-separated symmetric retention levels p00 = p11 (A1/B1 only).
    #[arg(long)]
    pub p: Option<String>,
    /// Grid step for the (p00, p11) sweep over [0.75, 0.95] (A2/B2 only).
    #[arg(long)]
    pub grid_step: Option<f64>,
    /// Monte-Carlo replicates per cell.
    #[arg(short = 'R', long, default_value_t = 500)]
    pub replicates: usize,
    /// Resamples per replicate for the proposed method's standard error.
    #[arg(short = 'M', long, default_value_t = 500)]
    pub resamples: usize,
    /// Skip standard errors and coverage (much faster; Bias/SD/MSE/RE only).
    #[arg(long)]
    pub no_se: bool,
    /// Comma-separated methods to run.
    #[arg(long, default_value = "proposed,oracle,naive,model1,model2")]
    pub methods: String,
    /// Master seed for the whole sweep (env PRAM_SEED, default 0).
    #[arg(long, env = "PRAM_SEED")]
    pub seed: Option<u64>,
    /// Two-sided confidence level for coverage.
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    /// Metrics CSV output path.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON summary path (default: the CSV path with a .json extension).
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Parse the command line, run it, and return the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => return report_clap_error(e),
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error[cli-args]: could not size the thread pool: {e}");
            return 2;
        }
    }
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e);
            e.exit_code()
        }
    }
}

fn report_clap_error(e: clap::Error) -> i32 {
    use clap::error::ErrorKind;
    if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
        print!("{e}");
        return 0;
    }
    let rendered = e.to_string();
    let line = rendered
        .lines()
        .find(|l| !l.trim().is_empty())
        .unwrap_or("invalid arguments")
        .trim()
        .trim_start_matches("error: ");
    eprintln!("error[cli-args]: {line}");
    2
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Perturb(args) => cmd_perturb(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Variance(args) => cmd_variance(args),
        Command::RecoverFreq(args) => cmd_recover_freq(args),
        Command::Simulate(args) => cmd_simulate(args),
    }
}

// ---------------------------------------------------------------------------
// perturb
// ---------------------------------------------------------------------------

fn cmd_perturb(args: &PerturbArgs) -> Result<()> {
    let mut table = Table::read_csv(&args.data)?;
    let p = read_matrix_csv(&args.matrix)?;
    let k = p.levels();
    let recode_report = if args.recode {
        let mapping = table.recode_column(&args.column, k)?;
        Some(RecodeReport {
            schema: SCHEMA_VERSION,
            column: args.column.clone(),
            mapping,
        })
    } else {
        None
    };
    let levels = table.level_column(&args.column, k)?;
    let released = perturb_levels(&levels, &p, args.seed.unwrap_or(0))?;
    table.set_column(&args.column, released.iter().map(|v| v.to_string()).collect())?;
    table.write_csv(&args.out)?;
    if let Some(report) = recode_report {
        write_json(&recode_sidecar_path(&args.out), &report)?;
    }
    println!("levels: {k}");
    println!("condition: {}", p.condition());
    let diag: Vec<String> = (0..k).map(|i| format!("{}", p.entry(i, i))).collect();
    println!("diagonal: {}", diag.join(","));
    Ok(())
}

// ---------------------------------------------------------------------------
// estimate / variance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SeMode {
    None,
    Resample,
    Plugin,
    Both,
}

impl SeMode {
    fn parse(s: &str, allow_none: bool) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" if allow_none => Ok(SeMode::None),
            "resample" => Ok(SeMode::Resample),
            "plugin" => Ok(SeMode::Plugin),
            "both" => Ok(SeMode::Both),
            other => Err(Error::parse(format!(
                "unknown variance mode '{other}' (expected {}resample, plugin or both)",
                if allow_none { "none, " } else { "" }
            ))),
        }
    }

    fn resample(&self) -> bool {
        matches!(self, SeMode::Resample | SeMode::Both)
    }

    fn plugin(&self) -> bool {
        matches!(self, SeMode::Plugin | SeMode::Both)
    }
}

struct Inputs {
    data: Dataset,
    p: TransitionMatrix,
    config: EstimandConfig,
    method: MethodChoice,
}

fn load_inputs(input: &InputArgs) -> Result<Inputs> {
    let method: MethodChoice = input.method.parse()?;
    let table = Table::read_csv(&input.data)?;
    let p = read_matrix_csv(&input.matrix)?;
    let config = if input.estimand.trim_start().starts_with('{') {
        EstimandConfig::from_json(&input.estimand)?
    } else {
        EstimandConfig::read(Path::new(&input.estimand))?
    };
    if p.levels() != config.levels {
        return Err(Error::parse(format!(
            "the matrix has {} levels but the estimand declares {}",
            p.levels(),
            config.levels
        )));
    }
    // Columns the estimand reads, plus any extra latent-model predictors.
    let mut numeric = config.numeric_columns();
    if matches!(method, MethodChoice::Model1 | MethodChoice::Model2) {
        for name in latent_predictors(input, &config) {
            if name != config.sensitive_column && !numeric.contains(&name) {
                numeric.push(name);
            }
        }
    }
    let mut data = dataset_from_table(&table, config.levels, &numeric, &config.sensitive_column, false)?;
    if let Some(original) = &input.original_column {
        data.set_original_levels(table.level_column(original, config.levels)?)?;
    } else if method == MethodChoice::Oracle {
        return Err(Error::parse(
            "--method oracle needs --original-column with the pre-release levels",
        ));
    }
    Ok(Inputs {
        data,
        p,
        config,
        method,
    })
}

fn latent_predictors(input: &InputArgs, config: &EstimandConfig) -> Vec<String> {
    match &input.latent_predictors {
        Some(list) => list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().to_string())
            .collect(),
        None => config.numeric_columns(),
    }
}

fn latent_family(input: &InputArgs, method: MethodChoice) -> Result<LatentFamily> {
    let no_intercept = input.latent_no_intercept || method == MethodChoice::Model2;
    match (input.latent_family.to_ascii_lowercase().as_str(), no_intercept) {
        ("logistic", false) => Ok(LatentFamily::Logistic),
        ("logistic", true) => Ok(LatentFamily::LogisticNoIntercept),
        ("probit", false) => Ok(LatentFamily::Probit),
        ("probit", true) => Ok(LatentFamily::ProbitNoIntercept),
        (other, _) => Err(Error::parse(format!(
            "unknown latent family '{other}' (expected logistic or probit)"
        ))),
    }
}

/// The equation weights of one of the three weighting estimators (the
/// model-dependent methods carry no reusable scheme and return None).
fn equation_weights(inputs: &Inputs) -> Result<Option<(WeightScheme, Method)>> {
    match inputs.method {
        MethodChoice::Proposed => {
            let q = inputs.p.invert()?;
            Ok(Some((
                WeightScheme::inverse_transition(&inputs.data, &q)?,
                Method::Proposed,
            )))
        }
        MethodChoice::Oracle => Ok(Some((
            WeightScheme::indicator_original(&inputs.data)?,
            Method::Oracle,
        ))),
        MethodChoice::Naive => Ok(Some((
            WeightScheme::indicator_perturbed(&inputs.data)?,
            Method::Naive,
        ))),
        MethodChoice::Model1 | MethodChoice::Model2 => Ok(None),
    }
}

fn diag_std_errors(cov: &SquareMat) -> Vec<f64> {
    (0..cov.size())
        .map(|j| cov.get(j, j).max(0.0).sqrt())
        .collect()
}

fn variance_reports(
    inputs: &Inputs,
    f: &dyn EstimatingFunction,
    w: &WeightScheme,
    beta: &[f64],
    se: SeMode,
    resamples: usize,
    seed: u64,
    solver_cfg: &SolverConfig,
) -> Result<(Vec<VarianceReport>, Option<SquareMat>)> {
    let mut reports = Vec::new();
    let mut headline: Option<SquareMat> = None;
    if se.resample() {
        let rcfg = ResampleConfig {
            resamples,
            law: MultiplierLaw::Exponential,
            seed,
            failure_limit_percent: 5.0,
        };
        let rv = resample_variance_with_weights(&inputs.data, f, w, beta, &rcfg, solver_cfg)?;
        reports.push(VarianceReport {
            method: "resample".to_string(),
            covariance: covariance_to_rows(&rv.covariance),
            std_errors: diag_std_errors(&rv.covariance),
            resamples_used: Some(rv.resamples_used),
            failures: Some(rv.failures),
        });
        headline = Some(rv.covariance);
    }
    if se.plugin() {
        let cov = plugin_variance_with_weights(&inputs.data, f, w, beta, solver_cfg)?;
        reports.push(VarianceReport {
            method: "plugin".to_string(),
            covariance: covariance_to_rows(&cov),
            std_errors: diag_std_errors(&cov),
            resamples_used: None,
            failures: None,
        });
        if headline.is_none() {
            headline = Some(cov);
        }
    }
    Ok((reports, headline))
}

fn solve_and_report(
    inputs: &Inputs,
    input_args: &InputArgs,
    se: SeMode,
    resamples: usize,
    seed: u64,
    ci_level: f64,
) -> Result<EstimateReport> {
    let spec = inputs.config.to_spec()?;
    let f = build_estimating_function(&spec, &inputs.data)?;
    let solver_cfg = SolverConfig::default();
    let (mut est, weights) = match equation_weights(inputs)? {
        Some((w, method)) => {
            let est = estimate_with_weights(&inputs.data, f.as_ref(), &w, method, &solver_cfg)?;
            (est, Some(w))
        }
        None => {
            if se != SeMode::None {
                return Err(Error::parse(
                    "model-dependent estimates come without a variance here; \
                     rerun with --method proposed for standard errors",
                ));
            }
            let family = latent_family(input_args, inputs.method)?;
            let lspec = LatentModelSpec {
                family,
                predictors: latent_predictors(input_args, &inputs.config),
            };
            let fit = fit_latent_model(&inputs.data, &inputs.p, &lspec)?;
            let est =
                model_dependent_estimate(&inputs.data, &inputs.p, f.as_ref(), &fit, &solver_cfg)?;
            (est, None)
        }
    };
    let mut variance = Vec::new();
    if let Some(w) = &weights {
        let (reports, headline) = variance_reports(
            inputs,
            f.as_ref(),
            w,
            &est.beta().to_vec(),
            se,
            resamples,
            seed,
            &solver_cfg,
        )?;
        variance = reports;
        if let Some(cov) = headline {
            est.set_covariance(cov)?;
        }
    }
    let (level, intervals) = if est.covariance().is_some() {
        let ci = confidence_intervals(&est, ci_level)?;
        (
            Some(ci_level),
            Some(ci.into_iter().map(|(lo, hi)| [lo, hi]).collect()),
        )
    } else {
        (None, None)
    };
    let d = est.diagnostics().clone();
    Ok(EstimateReport {
        schema: SCHEMA_VERSION,
        method: inputs.method.label().to_string(),
        n: inputs.data.n(),
        beta_hat: est.beta().to_vec(),
        std_errors: est.std_errors(),
        covariance: est.covariance().map(covariance_to_rows),
        ci_level: level,
        conf_intervals: intervals,
        solver: SolveReport {
            iterations: d.iterations,
            residual_norm: d.residual_norm,
            converged: d.converged,
            jacobian_condition: d.jacobian_condition,
        },
        variance,
    })
}

fn emit_report(report: &EstimateReport, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            write_json(path, report)?;
            let beta: Vec<String> = report.beta_hat.iter().map(|b| format!("{b}")).collect();
            println!("method: {}", report.method);
            println!("beta_hat: {}", beta.join(","));
            println!("wrote {}", path.display());
        }
        None => {
            let text = serde_json::to_string_pretty(report).map_err(|source| Error::Json {
                path: None,
                source,
            })?;
            println!("{text}");
        }
    }
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs) -> Result<()> {
    let inputs = load_inputs(&args.input)?;
    let se = SeMode::parse(&args.with_se, true)?;
    let report = solve_and_report(
        &inputs,
        &args.input,
        se,
        args.resamples,
        args.seed.unwrap_or(0),
        args.ci_level,
    )?;
    emit_report(&report, &args.out)
}

fn cmd_variance(args: &VarianceArgs) -> Result<()> {
    let inputs = load_inputs(&args.input)?;
    let se = SeMode::parse(&args.se, false)?;
    let report = match &args.beta {
        None => solve_and_report(
            &inputs,
            &args.input,
            se,
            args.resamples,
            args.seed.unwrap_or(0),
            args.ci_level,
        )?,
        Some(list) => {
            let beta = parse_f64_list(list)?;
            let spec = inputs.config.to_spec()?;
            let f = build_estimating_function(&spec, &inputs.data)?;
            if beta.len() != f.dim() {
                return Err(Error::parse(format!(
                    "--beta has {} coordinates, the estimand has {}",
                    beta.len(),
                    f.dim()
                )));
            }
            let solver_cfg = SolverConfig::default();
            let (w, _) = equation_weights(&inputs)?.ok_or_else(|| {
                Error::parse("--beta variance needs an equation method (proposed, oracle, naive)")
            })?;
            let (variance, headline) = variance_reports(
                &inputs,
                f.as_ref(),
                &w,
                &beta,
                se,
                args.resamples,
                args.seed.unwrap_or(0),
                &solver_cfg,
            )?;
            let std_errors = headline.as_ref().map(diag_std_errors);
            let z = normal_quantile((1.0 + args.ci_level) / 2.0);
            let conf_intervals = std_errors.as_ref().map(|ses| {
                beta.iter()
                    .zip(ses)
                    .map(|(&b, &s)| [b - z * s, b + z * s])
                    .collect()
            });
            let residual_norm = max_abs(&residual(&inputs.data, f.as_ref(), &w, &beta));
            EstimateReport {
                schema: SCHEMA_VERSION,
                method: inputs.method.label().to_string(),
                n: inputs.data.n(),
                beta_hat: beta,
                std_errors,
                covariance: headline.as_ref().map(covariance_to_rows),
                ci_level: Some(args.ci_level),
                conf_intervals,
                solver: SolveReport {
                    iterations: 0,
                    residual_norm,
                    converged: residual_norm <= solver_cfg.tolerance,
                    jacobian_condition: f64::NAN,
                },
                variance,
            }
        }
    };
    emit_report(&report, &args.out)
}

// ---------------------------------------------------------------------------
// recover-freq
// ---------------------------------------------------------------------------

fn cmd_recover_freq(args: &RecoverFreqArgs) -> Result<()> {
    let table = Table::read_csv(&args.data)?;
    let p = read_matrix_csv(&args.matrix)?;
    let k = p.levels();
    let levels = table.level_column(&args.column, k)?;
    let observed = FrequencyVector::from_levels(&levels, k)?;
    let recovered = recover_frequencies(&p.invert()?, &observed)?;
    let projected = args
        .project_simplex
        .then(|| project_to_simplex(&recovered.raw));
    let report = FrequencyReport {
        schema: SCHEMA_VERSION,
        levels: k,
        observed: observed.values().to_vec(),
        recovered: recovered.raw,
        outside_simplex: recovered.outside_simplex,
        projected,
    };
    match &args.out {
        Some(path) => {
            write_json(path, &report)?;
            println!("wrote {}", path.display());
        }
        None => {
            let text = serde_json::to_string_pretty(&report).map_err(|source| Error::Json {
                path: None,
                source,
            })?;
            println!("{text}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let scenario: ScenarioId = args.scenario.parse()?;
    let mut cfg = ScenarioConfig::table_defaults(scenario);
    if let Some(list) = &args.n {
        cfg.n_values = parse_usize_list(list)?;
    }
    if scenario.is_grid() {
        if args.p.is_some() {
            return Err(Error::parse(format!(
                "scenario {scenario} sweeps a (p00, p11) grid; use --grid-step, not --p"
            )));
        }
        if let Some(step) = args.grid_step {
            cfg.p_pairs = grid_pairs(0.75, 0.95, step)?;
        }
    } else {
        if args.grid_step.is_some() {
            return Err(Error::parse(format!(
                "scenario {scenario} uses symmetric retention levels; use --p, not --grid-step"
            )));
        }
        if let Some(list) = &args.p {
            cfg.p_pairs = diagonal_pairs(&parse_f64_list(list)?);
        }
    }
    cfg.replicates = args.replicates;
    cfg.resamples = args.resamples;
    cfg.with_se = !args.no_se;
    cfg.ci_level = args.ci_level;
    cfg.master_seed = args.seed.unwrap_or(0);
    cfg.methods = parse_methods(&args.methods)?;
    let table = run_scenario(&cfg)?;
    table.write_csv(&args.out)?;
    let json_path = args
        .json
        .clone()
        .unwrap_or_else(|| args.out.with_extension("json"));
    write_json(&json_path, &table)?;
    println!(
        "wrote {} and {} ({} cells x {} replicates)",
        args.out.display(),
        json_path.display(),
        cfg.cells().len(),
        cfg.replicates
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// list parsing
// ---------------------------------------------------------------------------

fn parse_f64_list(list: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(format!("'{}' is not a number", s.trim())))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::parse("empty number list"));
    }
    Ok(values)
}

fn parse_usize_list(list: &str) -> Result<Vec<usize>> {
    let values: Vec<usize> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::parse(format!("'{}' is not a positive integer", s.trim())))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::parse("empty integer list"));
    }
    Ok(values)
}
