//! Command-line front end: every subcommand reads CSV inputs, calls one
//! library routine and writes a JSON document with the result, the
//! parameters used and provenance.

mod input;

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use batchpi::applications::{
    counterfactual_interval, pac_rank, select_with_control, CounterfactualTarget, Observation,
};
use batchpi::covshift::PropensityModel;
use batchpi::engine::{batch_pi_report, BatchScoreFn, EngineOptions, RankOrderFn};
use batchpi::quantile::{multi_quantile_bounds, quantile_interval_report, QuantileTarget};
use batchpi::sim::models::fit_logistic_propensity;
use batchpi::sim::{run_coverage_experiment, write_summary_json, write_trials_csv, SimConfig};
use batchpi::{CalibrationScores, Levels, Probability, ScoreBounds};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

pub use input::Table;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] batchpi::Error),
    #[error("input: {0}")]
    Input(String),
    #[error("config: schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("usage: {0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Exit status for this error; every failure is a validation failure.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "batchpi", version, about = "Prediction intervals for functions of a batch of test outcomes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Interval for the ceil((1-delta) m)-th smallest test score.
    Quantile(QuantileArgs),
    /// Interval for the mean of the m test scores.
    Mean(MeanArgs),
    /// Simultaneous bounds for several test order statistics.
    Multiq(MultiqArgs),
    /// Rank whose threshold covers a 1-delta share of the batch with probability 1-alpha.
    Pac(PacArgs),
    /// Selection with at most eta false claims with probability 1-alpha.
    Select(SelectArgs),
    /// Counterfactual bounds for treated units from controls under covariate shift.
    Covshift(CovshiftArgs),
    /// Monte Carlo coverage experiment from a JSON config.
    Simulate(SimulateArgs),
}

fn parse_prob(s: &str) -> std::result::Result<Probability, String> {
    s.parse().map_err(|e: batchpi::Error| e.to_string())
}

/// `exact` or `sampled:<count>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Exact,
    Sampled(usize),
}

fn parse_mode(s: &str) -> std::result::Result<ModeArg, String> {
    match s.split_once(':') {
        None if s == "exact" => Ok(ModeArg::Exact),
        Some(("sampled", k)) => k.parse().map(ModeArg::Sampled).map_err(|_| format!("bad sample count `{k}`")),
        _ => Err(format!("expected `exact` or `sampled:<count>`, got `{s}`")),
    }
}

impl ModeArg {
    fn options(self, seed: u64) -> EngineOptions {
        match self {
            ModeArg::Exact => EngineOptions::exact(),
            ModeArg::Sampled(count) => EngineOptions::sampled(count, seed),
        }
    }

    fn label(self) -> String {
        match self {
            ModeArg::Exact => "exact".into(),
            ModeArg::Sampled(k) => format!("sampled:{k}"),
        }
    }
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LevelArgs {
    #[arg(long, value_parser = parse_prob)]
    pub alpha: Probability,
    /// Lower-tail share; defaults to alpha - gamma, or alpha/2 if gamma is also omitted.
    #[arg(long, value_parser = parse_prob)]
    pub beta: Option<Probability>,
    #[arg(long, value_parser = parse_prob)]
    pub gamma: Option<Probability>,
}

impl LevelArgs {
    pub fn resolve(&self) -> Result<Levels> {
        check_open("alpha", &self.alpha)?;
        let rest = |given: &Probability| {
            Probability::from_rational(self.alpha.as_rational() - given.as_rational())
                .map_err(|_| CliError::Usage(format!("{given} exceeds alpha = {}", self.alpha)))
        };
        Ok(match (&self.beta, &self.gamma) {
            (Some(b), Some(g)) => Levels::new(self.alpha.clone(), b.clone(), g.clone())?,
            (Some(b), None) => Levels::new(self.alpha.clone(), b.clone(), rest(b)?)?,
            (None, Some(g)) => Levels::new(self.alpha.clone(), rest(g)?, g.clone())?,
            (None, None) => Levels::two_sided(self.alpha.clone()),
        })
    }
}

fn check_open(name: &str, p: &Probability) -> Result<()> {
    if p.is_zero() || p.is_one() {
        return Err(CliError::Usage(format!("--{name} must lie strictly between 0 and 1")));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ScoreInput {
    /// CSV with a `score` column.
    #[arg(long, alias = "n-from")]
    pub input: PathBuf,
    /// Infimum of the score range, used for ranks below the calibration set.
    #[arg(long, allow_negative_numbers = true)]
    pub lower_bound: Option<f64>,
    /// Supremum of the score range.
    #[arg(long, allow_negative_numbers = true)]
    pub upper_bound: Option<f64>,
}

impl ScoreInput {
    pub fn load(&self) -> Result<CalibrationScores> {
        let raw = Table::read(&self.input)?.f64_column("score")?;
        let bounds = ScoreBounds::new(
            self.lower_bound.unwrap_or(f64::NEG_INFINITY),
            self.upper_bound.unwrap_or(f64::INFINITY),
        )?;
        Ok(CalibrationScores::with_bounds(&raw, bounds)?)
    }
}

#[derive(Debug, Args)]
pub struct QuantileArgs {
    #[command(flatten)]
    pub scores: ScoreInput,
    #[arg(long)]
    pub m: usize,
    #[arg(long, value_parser = parse_prob)]
    pub delta: Probability,
    #[command(flatten)]
    pub levels: LevelArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct MeanArgs {
    #[command(flatten)]
    pub scores: ScoreInput,
    #[arg(long)]
    pub m: usize,
    #[command(flatten)]
    pub levels: LevelArgs,
    #[arg(long, value_parser = parse_mode, default_value = "exact")]
    pub mode: ModeArg,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct MultiqArgs {
    #[command(flatten)]
    pub scores: ScoreInput,
    #[arg(long)]
    pub m: usize,
    /// Comma-separated ranks of the targeted test order statistics.
    #[arg(long, value_delimiter = ',', required = true)]
    pub t_list: Vec<usize>,
    #[arg(long, value_parser = parse_prob)]
    pub alpha: Probability,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct PacArgs {
    /// Calibration size; taken from `--input` when omitted.
    #[arg(long)]
    pub n: Option<usize>,
    /// CSV with a `score` column; adds the score threshold to the output.
    #[arg(long, alias = "n-from")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub m: usize,
    #[arg(long, value_parser = parse_prob)]
    pub delta: Probability,
    #[arg(long, value_parser = parse_prob)]
    pub alpha: Probability,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// CSV whose `score` column holds mu(x_i) * 1{y_i <= c}.
    #[arg(long)]
    pub input: PathBuf,
    /// CSV with a `prediction` column for the test points.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub eta: usize,
    #[arg(long, value_parser = parse_prob)]
    pub alpha: Probability,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CovshiftArgs {
    /// CSV with `feature_*`, `treated` and `outcome` columns and an optional
    /// `propensity` column holding P(control | x).
    #[arg(long)]
    pub input: PathBuf,
    /// `mean`, `median`, `quartiles` or `quantiles:<t1>,<t2>,...`.
    #[arg(long, default_value = "mean")]
    pub target: String,
    #[arg(long, value_parser = parse_prob)]
    pub alpha: Probability,
    /// Lower bound on the `propensity` column.
    #[arg(long)]
    pub c: Option<f64>,
    /// Without a `propensity` column: fit a logistic model and clip it below here.
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub lower_bound: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub upper_bound: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Per-trial CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON summary; stdout when omitted.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub version: &'static str,
    pub git: &'static str,
    pub seed: u64,
}

impl Provenance {
    pub fn new(seed: u64) -> Self {
        Provenance { version: env!("CARGO_PKG_VERSION"), git: env!("BATCHPI_GIT_DESCRIBE"), seed }
    }
}

/// Reads and validates a simulation config; unknown keys are rejected with
/// their path.
pub fn parse_config(path: &Path) -> Result<SimConfig> {
    let text = fs::read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let cfg: SimConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Schema { path: e.path().to_string(), message: e.inner().to_string() })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_target(s: &str) -> Result<CounterfactualTarget> {
    Ok(match s {
        "mean" => CounterfactualTarget::Mean,
        "median" => CounterfactualTarget::Median,
        "quartiles" => CounterfactualTarget::Quartiles,
        _ => match s.strip_prefix("quantiles:") {
            Some(list) => CounterfactualTarget::Quantiles(
                list.split(',')
                    .map(|t| t.trim().parse().map_err(|_| CliError::Usage(format!("bad rank `{t}` in --target"))))
                    .collect::<Result<_>>()?,
            ),
            None => return Err(CliError::Usage(format!("unknown target `{s}`"))),
        },
    })
}

fn document(command: &str, parameters: Value, result: impl Serialize, seed: u64) -> Result<String> {
    let doc = json!({
        "command": command,
        "parameters": parameters,
        "result": result,
        "provenance": Provenance::new(seed),
    });
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Usage(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn levels_json(l: &Levels) -> Value {
    json!({"alpha": l.alpha(), "beta": l.beta(), "gamma": l.gamma()})
}

/// Looks up `P(control | x)` by exact feature match.
fn tabulated_propensity(features: &[Vec<f64>], probs: &[f64], c: f64) -> Result<PropensityModel> {
    let key = |x: &[f64]| x.iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    let mut table: HashMap<Vec<u64>, f64> = HashMap::new();
    for (x, &p) in features.iter().zip(probs) {
        if let Some(old) = table.insert(key(x), p) {
            if old != p {
                return Err(CliError::Input("rows with identical features carry different propensities".into()));
            }
        }
    }
    Ok(PropensityModel::new(c, move |x| table.get(&key(x)).copied().unwrap_or(f64::NAN))?)
}

/// Runs one command and writes its JSON (or CSV) output.
pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Quantile(a) => {
            let scores = a.scores.load()?;
            let levels = a.levels.resolve()?;
            let target = QuantileTarget::new(a.delta.clone(), a.m)?;
            let report = quantile_interval_report(&scores, a.m, &target, &levels)?;
            let params = json!({"n": scores.n(), "m": a.m, "delta": a.delta, "zeta": target.zeta(), "levels": levels_json(&levels)});
            emit(&a.common.out, &document("quantile", params, report, a.common.seed)?)
        }
        Command::Mean(a) => {
            let scores = a.scores.load()?;
            let levels = a.levels.resolve()?;
            let report = batch_pi_report(
                &scores,
                a.m,
                &BatchScoreFn::Mean,
                &RankOrderFn::sum(),
                &levels,
                &a.mode.options(a.common.seed),
            )?;
            let params = json!({"n": scores.n(), "m": a.m, "mode": a.mode.label(), "levels": levels_json(&levels)});
            emit(&a.common.out, &document("mean", params, report, a.common.seed)?)
        }
        Command::Multiq(a) => {
            check_open("alpha", &a.alpha)?;
            let scores = a.scores.load()?;
            let bounds = multi_quantile_bounds(&scores, a.m, &a.t_list, &a.alpha)?;
            let params = json!({"n": scores.n(), "m": a.m, "t_list": a.t_list, "alpha": a.alpha});
            emit(&a.common.out, &document("multiq", params, bounds, a.common.seed)?)
        }
        Command::Pac(a) => {
            let scores = a.input.as_ref().map(|p| ScoreInput { input: p.clone(), lower_bound: None, upper_bound: None }.load()).transpose()?;
            let n = match (a.n, &scores) {
                (Some(n), Some(s)) if n != s.n() => {
                    return Err(CliError::Usage(format!("--n {n} disagrees with {} scores in --input", s.n())))
                }
                (Some(n), _) => n,
                (None, Some(s)) => s.n(),
                (None, None) => return Err(CliError::Usage("give --n or --input".into())),
            };
            let rank = pac_rank(n, a.m, &a.delta, &a.alpha)?;
            let threshold = scores.as_ref().map(|s| rank.threshold(s));
            let params = json!({"n": n, "m": a.m, "delta": a.delta, "alpha": a.alpha});
            let result = json!({"rank": rank, "threshold": threshold});
            emit(&a.common.out, &document("pac", params, result, a.common.seed)?)
        }
        Command::Select(a) => {
            let scores = CalibrationScores::new(&Table::read(&a.input)?.f64_column("score")?)?;
            let preds = Table::read(&a.test)?.f64_column("prediction")?;
            let res = select_with_control(&scores, &preds, a.eta, &a.alpha)?;
            let params = json!({"n": scores.n(), "m": preds.len(), "eta": a.eta, "alpha": a.alpha});
            emit(&a.common.out, &document("select", params, res, a.common.seed)?)
        }
        Command::Covshift(a) => {
            let table = Table::read(&a.input)?;
            let features = table.features()?;
            let treated = table.bool_column("treated")?;
            let outcome = table.f64_column("outcome")?;
            let (model, source) = if table.has("propensity") {
                let c = a.c.ok_or_else(|| CliError::Usage("--c is required with a `propensity` column".into()))?;
                (tabulated_propensity(&features, &table.f64_column("propensity")?, c)?, "column")
            } else {
                let clip = a.clip.ok_or_else(|| CliError::Usage("give a `propensity` column or --clip".into()))?;
                let control: Vec<bool> = treated.iter().map(|t| !t).collect();
                (fit_logistic_propensity(&features, &control, clip)?, "logistic")
            };
            let observed: Vec<Observation> = features
                .into_iter()
                .zip(treated)
                .zip(outcome)
                .map(|((features, treated), outcome)| Observation { features, treated, outcome })
                .collect();
            let target = parse_target(&a.target)?;
            let range = ScoreBounds::new(a.lower_bound, a.upper_bound)?;
            let report = counterfactual_interval(&observed, &model, &target, &a.alpha, range, a.common.seed)?;
            let params = json!({
                "target": a.target, "alpha": a.alpha, "propensity": source,
                "lower_bound": model.lower_bound(), "outcome_range": [a.lower_bound, a.upper_bound],
            });
            emit(&a.common.out, &document("covshift", params, report, a.common.seed)?)
        }
        Command::Simulate(a) => {
            let mut cfg = parse_config(&a.config)?;
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            let report = run_coverage_experiment(&cfg)?;
            write_trials_csv(&report.records, fs::File::create(&a.out)?)?;
            let mut summary = Vec::new();
            write_summary_json(&report, &mut summary)?;
            let summary: Value = serde_json::from_slice(&summary).map_err(|e| CliError::Usage(e.to_string()))?;
            let mut text = serde_json::to_string_pretty(&json!({"summary": summary, "provenance": Provenance::new(cfg.seed)}))
                .map_err(|e| CliError::Usage(e.to_string()))?;
            text.push('\n');
            emit(&a.summary, &text)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit status.
/// Errors go to stderr as one line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if e.use_stderr() {
                let msg = e.kind().to_string();
                let detail = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
                eprintln!("error: {}", if detail.is_empty() { msg } else { detail });
            } else {
                let _ = e.print();
            }
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}
