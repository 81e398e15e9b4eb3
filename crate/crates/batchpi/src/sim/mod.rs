//! Monte Carlo coverage experiments.
//!
//! A [`SimConfig`] names a design, sizes, levels and a master seed. Fixed
//! parameters and fitted score models are drawn once per experiment; each
//! trial then draws fresh calibration and test data from its own substream,
//! so results do not depend on thread scheduling.

pub mod data;
pub mod models;
mod output;
pub mod seeds;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::applications::{
    counterfactual_interval, pac_rank, select, selection_rank, CounterfactualBounds, CounterfactualTarget,
    Observation,
};
use crate::baselines::{
    bonferroni_baseline, concentration_mean_interval, kfwer_pvalue_selection, markov_pac_rank, partition_baseline,
    split_conformal_rank, GroupedScores, PValueVariant,
};
use crate::covshift::{rejection_sample, PropensityModel};
use crate::engine::{BatchScoreFn, PredictionInterval};
use crate::error::{Error, Result};
use crate::quantile::{quantile_ranks, round_half_up, QuantileTarget};
use crate::types::{CalibrationScores, ExtendedScore, Levels, Probability, ScoreBounds};

use data::{CounterfactualParams, CounterfactualUnit, RegressionParams, SoftplusParams};
use models::{fit_logistic_propensity, fit_simple_regressor, Regressor, RegressorKind};
use seeds::{substream_rng, substream_seed, Stream};

pub use output::{write_summary_json, write_trials_csv};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "BATCHPI_THREADS";

/// Draw budget per trial when collecting treatment arms.
const MAX_ARM_DRAWS: usize = 50_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Regression data, PAC prediction sets.
    Pac,
    /// Softplus data, selection with a bound on false claims.
    Selection,
    /// Upper bound on the mean of untreated outcomes of treated units.
    CounterfactualMean,
    /// Median and quartiles of untreated outcomes of treated units.
    CounterfactualQuantiles,
    /// Continuous exponential scores, interval for one test order statistic.
    Quantile,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BatchPi,
    SplitConformal,
    Markov,
    JinCandes,
    JinRen,
    Partition,
    Bonferroni,
    Concentration,
}

impl Design {
    fn methods(self) -> &'static [Method] {
        use Method::*;
        match self {
            Design::Pac => &[BatchPi, SplitConformal, Markov],
            Design::Selection => &[BatchPi, JinCandes, JinRen],
            Design::CounterfactualMean => &[BatchPi, Partition, Bonferroni, Concentration],
            Design::CounterfactualQuantiles => &[BatchPi, Partition, Bonferroni],
            Design::Quantile => &[BatchPi],
        }
    }

    fn default_n_train(self) -> usize {
        match self {
            Design::Selection => 500,
            _ => 200,
        }
    }
}

/// Miscoverage budget. `beta` and `gamma` are either both given, with
/// `beta + gamma = alpha`, or both omitted for the design's default split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    pub alpha: Probability,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Probability>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Probability>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PropensitySource {
    /// The generating treatment model and its exact lower bound.
    #[default]
    Known,
    /// Logistic fit on a separate training sample, clipped below at `clip`.
    Estimated { n_train: usize, clip: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorParams {
    /// Noise scale of the softplus design.
    pub sigma: f64,
    /// Selection cutoff: a claim is `y > cutoff`.
    pub cutoff: f64,
    /// Removes the outcome noise in the regression design.
    pub degenerate: bool,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams { sigma: 3.0, cutoff: 5.0, degenerate: false }
    }
}

fn default_p() -> usize {
    20
}

fn default_score_model() -> RegressorKind {
    RegressorKind::Linear
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub design: Design,
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    pub n: usize,
    pub m: usize,
    pub levels: Vec<LevelSpec>,
    /// PAC miscoverage share, or the quantile target `ceil((1 - delta) m)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Probability>,
    /// False-claim budgets for the selection design.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub etas: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Defaults to every method available for the design.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<Method>>,
    #[serde(default = "default_score_model")]
    pub score_model: RegressorKind,
    #[serde(default)]
    pub propensity: PropensitySource,
    #[serde(default)]
    pub generator: GeneratorParams,
}

fn check_alpha(p: &Probability, what: &str) -> Result<()> {
    if p.is_zero() || p.is_one() {
        return Err(Error::Config(format!("{what} must lie strictly between 0 and 1, got {p}")));
    }
    Ok(())
}

impl SimConfig {
    /// Checks the config and resolves the level splits.
    pub fn validate(&self) -> Result<Vec<Levels>> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.n == 0 || self.m == 0 || self.p == 0 || self.n_train == Some(0) {
            return Err(Error::Config("sizes n, m, p and n_train must be positive".into()));
        }
        if self.levels.is_empty() {
            return Err(Error::Config("levels must not be empty".into()));
        }
        let allowed = self.design.methods();
        for m in self.methods() {
            if !allowed.contains(&m) {
                return Err(Error::Config(format!("method {m:?} is not available for design {:?}", self.design)));
            }
        }
        match self.design {
            Design::Pac | Design::Quantile => {
                let d = self.delta.as_ref().ok_or_else(|| Error::Config("delta is required".into()))?;
                check_alpha(d, "delta")?;
            }
            Design::Selection => {
                if self.etas.is_empty() {
                    return Err(Error::Config("etas must not be empty".into()));
                }
                if let Some(&e) = self.etas.iter().find(|&&e| e >= self.m) {
                    return Err(Error::EtaOutOfRange { eta: e, m: self.m });
                }
            }
            _ => {}
        }
        if let PropensitySource::Estimated { n_train, clip } = self.propensity {
            if n_train == 0 || !(clip > 0.0 && clip < 1.0) {
                return Err(Error::Config("estimated propensity needs n_train >= 1 and clip in (0, 1)".into()));
            }
        }
        if !(self.generator.sigma >= 0.0 && self.generator.sigma.is_finite() && self.generator.cutoff.is_finite()) {
            return Err(Error::Config("generator sigma and cutoff must be finite, sigma >= 0".into()));
        }
        self.levels
            .iter()
            .map(|l| {
                check_alpha(&l.alpha, "alpha")?;
                match (&l.beta, &l.gamma) {
                    (Some(b), Some(g)) => Levels::new(l.alpha.clone(), b.clone(), g.clone()),
                    (None, None) => Ok(match self.design {
                        Design::Quantile | Design::CounterfactualQuantiles => Levels::two_sided(l.alpha.clone()),
                        _ => Levels::upper(l.alpha.clone()),
                    }),
                    _ => Err(Error::Config("give both beta and gamma or neither".into())),
                }
            })
            .collect()
    }

    pub fn methods(&self) -> Vec<Method> {
        self.methods.clone().unwrap_or_else(|| self.design.methods().to_vec())
    }

    fn n_train(&self) -> usize {
        self.n_train.unwrap_or_else(|| self.design.default_n_train())
    }
}

/// One method's outcome in one trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub method: String,
    /// Whether the method's guarantee event held.
    pub covered: bool,
    pub coverage_rate: Option<f64>,
    pub width: Option<f64>,
    pub n_accepted: Option<usize>,
    pub false_claims: Option<usize>,
    pub true_claims: Option<usize>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub error: Option<String>,
}

impl TrialRecord {
    fn new(trial: usize, method: &str) -> Self {
        TrialRecord {
            trial,
            method: method.to_string(),
            covered: false,
            coverage_rate: None,
            width: None,
            n_accepted: None,
            false_claims: None,
            true_claims: None,
            lower: None,
            upper: None,
            error: None,
        }
    }

    fn failed(trial: usize, method: &str, e: &Error) -> Self {
        TrialRecord { error: Some(e.to_string()), ..Self::new(trial, method) }
    }

    fn interval(trial: usize, method: &str, iv: (ExtendedScore, ExtendedScore), covered: bool) -> Self {
        TrialRecord {
            covered,
            width: Some(iv.1.value() - iv.0.value()),
            lower: Some(iv.0.value()),
            upper: Some(iv.1.value()),
            ..Self::new(trial, method)
        }
    }
}

/// Mean and standard error (sample SD over the square root of the count).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn of(values: &[f64]) -> Option<Self> {
        let k = values.len();
        if k == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / k as f64;
        let se = if !mean.is_finite() {
            f64::INFINITY
        } else if k > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        } else {
            0.0
        };
        Some(Estimate { mean, se })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    /// Trials that produced a result.
    pub trials: usize,
    pub errors: usize,
    /// Frequency of the guarantee event, e.g. test coverage at least
    /// `1 - delta`, or at most `eta` false claims.
    pub covered: Option<Estimate>,
    pub coverage_rate: Option<Estimate>,
    pub width: Option<Estimate>,
    pub n_accepted: Option<Estimate>,
    pub false_claims: Option<Estimate>,
    pub true_claims: Option<Estimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageReport {
    pub config: SimConfig,
    pub summaries: Vec<MethodSummary>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

impl CoverageReport {
    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn records_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a TrialRecord> + 'a {
        self.records.iter().filter(move |r| r.method == method)
    }
}

fn summarize(labels: &[String], records: &[TrialRecord]) -> Vec<MethodSummary> {
    let mut by_label: BTreeMap<&str, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        by_label.entry(r.method.as_str()).or_default().push(r);
    }
    labels
        .iter()
        .map(|label| {
            let rows = by_label.remove(label.as_str()).unwrap_or_default();
            let ok: Vec<&TrialRecord> = rows.iter().copied().filter(|r| r.error.is_none()).collect();
            let est = |f: &dyn Fn(&TrialRecord) -> Option<f64>| Estimate::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            MethodSummary {
                method: label.clone(),
                trials: ok.len(),
                errors: rows.len() - ok.len(),
                covered: est(&|r| Some(f64::from(u8::from(r.covered)))),
                coverage_rate: est(&|r| r.coverage_rate),
                width: est(&|r| r.width),
                n_accepted: est(&|r| r.n_accepted.map(|v| v as f64)),
                false_claims: est(&|r| r.false_claims.map(|v| v as f64)),
                true_claims: est(&|r| r.true_claims.map(|v| v as f64)),
            }
        })
        .collect()
}

/// Label of a method at one level, e.g. `batch_pi[alpha=0.1]`.
pub fn method_label(name: &str, params: &[(&str, String)]) -> String {
    let inner: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{name}[{}]", inner.join(","))
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::BatchPi => "batch_pi",
        Method::SplitConformal => "split_conformal",
        Method::Markov => "markov",
        Method::JinCandes => "jin_candes",
        Method::JinRen => "jin_ren",
        Method::Partition => "partition",
        Method::Bonferroni => "bonferroni",
        Method::Concentration => "concentration",
    }
}

/// State shared by all trials.
enum Setup {
    /// `ranks` holds the threshold rank for each label, in label order.
    Pac { params: RegressionParams, model: Regressor, ranks: Vec<(String, Result<usize>)> },
    /// `ranks` holds the batch threshold rank per (level, eta).
    Selection { params: SoftplusParams, model: Regressor, ranks: Vec<Result<usize>> },
    Counterfactual { params: CounterfactualParams, propensity: PropensityModel },
    /// `(q_L, q_U)` per level.
    Quantile { ranks: Vec<Result<(usize, usize)>> },
}

struct Experiment<'a> {
    config: &'a SimConfig,
    levels: Vec<Levels>,
    methods: Vec<Method>,
    setup: Setup,
}

/// Fits a regressor on a training sample drawn from the `Train` substream.
fn train_regressor(config: &SimConfig, sample: impl FnOnce(&mut rand_chacha::ChaCha8Rng) -> data::Dataset) -> Result<Regressor> {
    let mut rng = substream_rng(config.seed, Stream::Train, 0);
    fit_simple_regressor(&sample(&mut rng), config.score_model)
}

impl<'a> Experiment<'a> {
    fn new(config: &'a SimConfig) -> Result<Self> {
        let levels = config.validate()?;
        let setup = match config.design {
            Design::Pac => {
                let mut params = RegressionParams::draw(config.p, config.seed);
                if config.generator.degenerate {
                    params = params.degenerate();
                }
                let model = train_regressor(config, |rng| params.sample(config.n_train(), rng))?;
                let delta = config.delta.as_ref().expect("validated");
                let mut ranks = Vec::new();
                for m in config.methods() {
                    let name = method_name(m);
                    if m == Method::SplitConformal {
                        let label = method_label(name, &[("delta", delta.to_string())]);
                        ranks.push((label, Ok(split_conformal_rank(config.n, delta))));
                        continue;
                    }
                    for l in &levels {
                        let label = method_label(name, &[("alpha", l.alpha().to_string())]);
                        let rank = if m == Method::BatchPi {
                            pac_rank(config.n, config.m, delta, l.alpha()).map(|r| r.r)
                        } else {
                            markov_pac_rank(config.n, delta, l.alpha())
                        };
                        ranks.push((label, rank));
                    }
                }
                Setup::Pac { params, model, ranks }
            }
            Design::Selection => {
                let params = SoftplusParams::draw(config.p, config.generator.sigma, config.seed);
                let model = train_regressor(config, |rng| params.sample(config.n_train(), rng))?;
                let ranks = levels
                    .iter()
                    .flat_map(|l| config.etas.iter().map(move |&eta| selection_rank(config.n, config.m, eta, l.alpha())))
                    .collect();
                Setup::Selection { params, model, ranks }
            }
            Design::CounterfactualMean | Design::CounterfactualQuantiles => {
                let params = CounterfactualParams::draw(config.p, config.seed);
                let propensity = match config.propensity {
                    PropensitySource::Known => {
                        let c = params.control_lower_bound() * (1.0 - 1e-12);
                        let fixed = params.clone();
                        PropensityModel::new(c, move |x| fixed.control_probability(x))?
                    }
                    PropensitySource::Estimated { n_train, clip } => {
                        let train = params.sample(n_train, &mut substream_rng(config.seed, Stream::Train, 0));
                        let x: Vec<Vec<f64>> = train.iter().map(|u| u.x.clone()).collect();
                        let control: Vec<bool> = train.iter().map(|u| !u.treated).collect();
                        fit_logistic_propensity(&x, &control, clip)?
                    }
                };
                Setup::Counterfactual { params, propensity }
            }
            Design::Quantile => {
                let target = QuantileTarget::new(config.delta.clone().expect("validated"), config.m)?;
                Setup::Quantile { ranks: levels.iter().map(|l| quantile_ranks(config.n, config.m, &target, l)).collect() }
            }
        };
        Ok(Experiment { config, levels, methods: config.methods(), setup })
    }

    fn delta(&self) -> &Probability {
        self.config.delta.as_ref().expect("validated")
    }

    /// Labels in reporting order.
    fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        let alpha = |l: &Levels| ("alpha", l.alpha().to_string());
        let split = |l: &Levels| [("beta", l.beta().to_string()), ("gamma", l.gamma().to_string())];
        for &m in &self.methods {
            let name = method_name(m);
            match (self.config.design, m) {
                (Design::Pac, Method::SplitConformal) => {
                    out.push(method_label(name, &[("delta", self.delta().to_string())]));
                }
                (Design::Pac | Design::CounterfactualMean, _) => {
                    out.extend(self.levels.iter().map(|l| method_label(name, &[alpha(l)])));
                }
                (Design::Selection, _) => {
                    for l in &self.levels {
                        for &eta in &self.config.etas {
                            out.push(method_label(name, &[alpha(l), ("eta", eta.to_string())]));
                        }
                    }
                }
                (Design::CounterfactualQuantiles, _) => {
                    for target in ["median", "quartiles"] {
                        out.extend(self.levels.iter().map(|l| method_label(&format!("{name}_{target}"), &[alpha(l)])));
                    }
                }
                (Design::Quantile, _) => {
                    out.extend(self.levels.iter().map(|l| {
                        let [b, g] = split(l);
                        method_label(name, &[alpha(l), b, g])
                    }));
                }
            }
        }
        out
    }

    fn trial(&self, t: usize) -> Vec<TrialRecord> {
        let mut rng = substream_rng(self.config.seed, Stream::Trial, t as u64);
        match &self.setup {
            Setup::Pac { params, model, ranks } => {
                let cal = params.sample(self.config.n, &mut rng);
                let test = params.sample(self.config.m, &mut rng);
                self.pac_trial(t, model, ranks, &cal, &test)
            }
            Setup::Selection { params, model, ranks } => {
                let cal = params.sample(self.config.n, &mut rng);
                let test = params.sample(self.config.m, &mut rng);
                self.selection_trial(t, model, ranks, &cal, &test)
            }
            Setup::Counterfactual { params, propensity } => {
                match params.sample_arms(self.config.n, self.config.m, MAX_ARM_DRAWS, &mut rng) {
                    Some((controls, treated)) => self.counterfactual_trial(t, propensity, &controls, &treated),
                    None => {
                        let e = Error::Config(format!("arm sizes not reached within {MAX_ARM_DRAWS} draws"));
                        self.labels().iter().map(|l| TrialRecord::failed(t, l, &e)).collect()
                    }
                }
            }
            Setup::Quantile { ranks } => {
                let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.sample(Exp1)).collect() };
                let cal = draw(self.config.n);
                let test = draw(self.config.m);
                self.quantile_trial(t, ranks, &cal, &test)
            }
        }
    }

    fn pac_trial(
        &self,
        t: usize,
        model: &Regressor,
        ranks: &[(String, Result<usize>)],
        cal: &data::Dataset,
        test: &data::Dataset,
    ) -> Vec<TrialRecord> {
        let residuals = |d: &data::Dataset| -> Vec<f64> {
            d.x.iter().zip(&d.y).map(|(x, y)| (y - model.predict(x)).abs()).collect()
        };
        let test_scores = residuals(test);
        let m = self.config.m;
        let needed = QuantileTarget::new(self.delta().clone(), m).expect("validated").zeta();
        let scores = match CalibrationScores::new(&residuals(cal)) {
            Ok(s) => s,
            Err(e) => return self.labels().iter().map(|l| TrialRecord::failed(t, l, &e)).collect(),
        };
        ranks
            .iter()
            .map(|(label, rank)| match rank {
                Ok(r) => {
                    let thr = scores.get(*r).value();
                    let hits = test_scores.iter().filter(|&&s| s <= thr).count();
                    TrialRecord {
                        covered: hits >= needed,
                        coverage_rate: Some(hits as f64 / m as f64),
                        width: Some(2.0 * thr),
                        ..TrialRecord::new(t, label)
                    }
                }
                Err(e) => TrialRecord::failed(t, label, e),
            })
            .collect()
    }

    fn selection_trial(
        &self,
        t: usize,
        model: &Regressor,
        ranks: &[Result<usize>],
        cal: &data::Dataset,
        test: &data::Dataset,
    ) -> Vec<TrialRecord> {
        let cutoff = self.config.generator.cutoff;
        // predictions are clamped at zero so that the score stays nonnegative
        let pred = |d: &data::Dataset| -> Vec<f64> { d.x.iter().map(|x| model.predict(x).max(0.0)).collect() };
        let cal_pred = pred(cal);
        let test_pred = pred(test);
        let null_scores: Vec<f64> = cal_pred.iter().zip(&cal.y).map(|(&mu, &y)| if y <= cutoff { mu } else { 0.0 }).collect();
        let pairs: Vec<(f64, f64)> = cal_pred.iter().copied().zip(cal.y.iter().copied()).collect();
        let null = CalibrationScores::new(&null_scores);
        let mut out = Vec::new();
        for &meth in &self.methods {
            for (li, l) in self.levels.iter().enumerate() {
                for (ei, &eta) in self.config.etas.iter().enumerate() {
                    let label = method_label(method_name(meth), &[("alpha", l.alpha().to_string()), ("eta", eta.to_string())]);
                    let selected = match meth {
                        Method::BatchPi => {
                            match (&null, &ranks[li * self.config.etas.len() + ei]) {
                                (Ok(s), Ok(q)) => select(&test_pred, s.get(*q)),
                                (Err(e), _) | (_, Err(e)) => Err(e.clone()),
                            }
                        }
                        Method::JinCandes => {
                            Ok(kfwer_pvalue_selection(&pairs, &test_pred, cutoff, eta, l.alpha(), PValueVariant::JinCandes))
                        }
                        _ => Ok(kfwer_pvalue_selection(&pairs, &test_pred, cutoff, eta, l.alpha(), PValueVariant::JinRen)),
                    };
                    match selected {
                        Ok(sel) => {
                            let false_claims = sel.iter().filter(|&&j| test.y[j] <= cutoff).count();
                            out.push(TrialRecord {
                                covered: false_claims <= eta,
                                false_claims: Some(false_claims),
                                true_claims: Some(sel.len() - false_claims),
                                ..TrialRecord::new(t, &label)
                            });
                        }
                        Err(e) => out.push(TrialRecord::failed(t, &label, &e)),
                    }
                }
            }
        }
        out
    }

    fn counterfactual_trial(
        &self,
        t: usize,
        propensity: &PropensityModel,
        controls: &[CounterfactualUnit],
        treated: &[CounterfactualUnit],
    ) -> Vec<TrialRecord> {
        let m = self.config.m;
        let range = ScoreBounds::new(0.0, 1.0).expect("unit range");
        let rejection_seed = substream_seed(self.config.seed, Stream::Rejection, t as u64);
        let observed: Vec<Observation> = controls
            .iter()
            .chain(treated)
            .map(|u| Observation { features: u.x.clone(), treated: u.treated, outcome: u.observed() })
            .collect();
        let truth: Vec<f64> = treated.iter().map(|u| u.y0).collect();
        let mut sorted_truth = truth.clone();
        sorted_truth.sort_by(f64::total_cmp);
        let truth_mean = truth.iter().sum::<f64>() / m as f64;

        let features: Vec<Vec<f64>> = controls.iter().map(|u| u.x.clone()).collect();
        let accepted: Result<Vec<f64>> = rejection_sample(&features, propensity, rejection_seed)
            .map(|mask| controls.iter().zip(mask).filter(|(_, a)| *a).map(|(u, _)| u.y0).collect());
        let n_acc = accepted.as_ref().map(Vec::len).ok();
        let accepted_scores = accepted.clone().and_then(|a| CalibrationScores::with_bounds(&a, range));

        let (t1, t2) = (round_half_up(m as u64, 4) as usize, round_half_up(3 * m as u64, 4) as usize);
        let zeta_med = m.div_ceil(2);
        let mut out = Vec::new();
        let mut emit = |label: String, res: Result<(ExtendedScore, ExtendedScore, bool)>| {
            out.push(match res {
                Ok((lo, hi, cov)) => TrialRecord { n_accepted: n_acc, ..TrialRecord::interval(t, &label, (lo, hi), cov) },
                Err(e) => TrialRecord::failed(t, &label, &e),
            })
        };
        let ends = |iv: &PredictionInterval| (iv.lower(), iv.upper());

        let targets: &[&str] =
            if self.config.design == Design::CounterfactualMean { &["mean"] } else { &["median", "quartiles"] };
        for &meth in &self.methods {
            let name = method_name(meth);
            for &target in targets {
                for l in &self.levels {
                    let alpha = l.alpha();
                    let label = if target == "mean" {
                        method_label(name, &[("alpha", alpha.to_string())])
                    } else {
                        method_label(&format!("{name}_{target}"), &[("alpha", alpha.to_string())])
                    };
                    let half = Levels::two_sided(alpha.clone());
                    let res: Result<(ExtendedScore, ExtendedScore, bool)> = match (meth, target) {
                        (Method::BatchPi, _) => {
                            let goal = match target {
                                "mean" => CounterfactualTarget::Mean,
                                "median" => CounterfactualTarget::Median,
                                _ => CounterfactualTarget::Quartiles,
                            };
                            counterfactual_interval(&observed, propensity, &goal, alpha, range, rejection_seed).map(|r| {
                                let covered = r.covers(&goal, &truth);
                                let (lo, hi) = match &r.bounds {
                                    CounterfactualBounds::Interval(iv) => ends(iv),
                                    CounterfactualBounds::Quartiles(b) => (b.lower, b.upper),
                                    CounterfactualBounds::Multi(b) => (b.lower[0], b.upper[b.upper.len() - 1]),
                                };
                                (lo, hi, covered)
                            })
                        }
                        // upper end of the two-sided McDiarmid set, as a bound on the mean
                        (Method::Concentration, _) => accepted
                            .clone()
                            .and_then(|a| concentration_mean_interval(&a, m, 0.0, 1.0, alpha))
                            .map(|iv| (ExtendedScore::new(range.lower).expect("finite"), iv.upper(), truth_mean <= iv.upper().value())),
                        (_, "mean") => {
                            let lv = Levels::upper(alpha.clone());
                            self.baseline(meth, &accepted, &accepted_scores, m, &BatchScoreFn::Mean, &lv, range)
                                .map(|iv| (iv.lower(), iv.upper(), iv.contains(truth_mean)))
                        }
                        (_, "median") => self
                            .baseline(meth, &accepted, &accepted_scores, m, &BatchScoreFn::OrderStat(zeta_med), &half, range)
                            .map(|iv| (iv.lower(), iv.upper(), iv.contains(sorted_truth[zeta_med - 1]))),
                        _ => {
                            // each side gets half the budget through the union bound
                            let lo = self.baseline(
                                meth,
                                &accepted,
                                &accepted_scores,
                                m,
                                &BatchScoreFn::OrderStat(t1),
                                &Levels::lower(alpha.half()),
                                range,
                            );
                            let hi = self.baseline(
                                meth,
                                &accepted,
                                &accepted_scores,
                                m,
                                &BatchScoreFn::OrderStat(t2),
                                &Levels::upper(alpha.half()),
                                range,
                            );
                            lo.and_then(|lo| hi.map(|hi| (lo.lower(), hi.upper())))
                                .map(|(lo, hi)| (lo, hi, lo.value() <= sorted_truth[t1 - 1] && sorted_truth[t2 - 1] <= hi.value()))
                        }
                    };
                    emit(label, res);
                }
            }
        }
        out
    }

    /// Partition or Bonferroni on the accepted controls.
    #[allow(clippy::too_many_arguments)]
    fn baseline(
        &self,
        meth: Method,
        accepted: &Result<Vec<f64>>,
        scores: &Result<CalibrationScores>,
        m: usize,
        h: &BatchScoreFn,
        levels: &Levels,
        range: ScoreBounds,
    ) -> Result<PredictionInterval> {
        match meth {
            Method::Partition => {
                let values = GroupedScores::new(accepted.as_ref().map_err(Clone::clone)?, m)?.values(h)?;
                partition_baseline(&values, levels, range)
            }
            _ => bonferroni_baseline(scores.as_ref().map_err(Clone::clone)?, m, h, levels),
        }
    }

    fn quantile_trial(&self, t: usize, ranks: &[Result<(usize, usize)>], cal: &[f64], test: &[f64]) -> Vec<TrialRecord> {
        let m = self.config.m;
        let target = QuantileTarget::new(self.delta().clone(), m).expect("validated");
        let mut sorted = test.to_vec();
        sorted.sort_by(f64::total_cmp);
        let truth = sorted[target.zeta() - 1];
        let scores = CalibrationScores::new(cal);
        self.levels
            .iter()
            .zip(ranks)
            .map(|(l, rank)| {
                let label = method_label(
                    "batch_pi",
                    &[("alpha", l.alpha().to_string()), ("beta", l.beta().to_string()), ("gamma", l.gamma().to_string())],
                );
                match (&scores, rank) {
                    (Ok(s), Ok((ql, qu))) => {
                        let (lo, hi) = (s.get(ql - 1), s.get(*qu));
                        let covered = lo.value() <= truth && truth <= hi.value();
                        TrialRecord::interval(t, &label, (lo, hi), covered)
                    }
                    (Err(e), _) | (_, Err(e)) => TrialRecord::failed(t, &label, e),
                }
            })
            .collect()
    }
}

/// Worker count from `BATCHPI_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&k: &usize| k > 0)
}

pub fn run_coverage_experiment(config: &SimConfig) -> Result<CoverageReport> {
    let exp = Experiment::new(config)?;
    let run = || (0..config.trials).into_par_iter().map(|t| exp.trial(t)).collect::<Vec<_>>();
    let per_trial = match thread_cap() {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    let records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
    let summaries = summarize(&exp.labels(), &records);
    Ok(CoverageReport { config: config.clone(), summaries, records })
}

#[cfg(test)]
mod tests;
