//! Recipes built on the batch procedures: simultaneous prediction sets with
//! a PAC-type guarantee, selection with a bound on the number of false
//! claims, and inference on counterfactual outcomes.

use serde::Serialize;

use crate::combinatorics::quantile_rank_pmf;
use crate::covshift::{rejection_sample, PropensityModel};
use crate::dist::quantile_lower;
use crate::engine::{batch_pi, BatchScoreFn, EngineOptions, PredictionInterval, RankOrderFn};
use crate::error::{Error, Result};
use crate::quantile::{multi_quantile_bounds, quantile_interval, quartile_bounds, MultiQuantileBounds, QuantileTarget, QuartileBounds};
use crate::types::{CalibrationScores, ExtendedScore, Levels, Probability, ScoreBounds};

/// Rank `r` such that `{y : s(x, y) <= S_(r)}` covers at least a `1 - delta`
/// share of the `m` test points with probability at least `1 - alpha`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PacRank {
    pub r: usize,
    pub delta: Probability,
    pub alpha: Probability,
    /// `ceil((1 - delta) m)`.
    pub m_delta: usize,
}

impl PacRank {
    /// The score threshold `S_(r)`.
    pub fn threshold(&self, scores: &CalibrationScores) -> ExtendedScore {
        scores.get(self.r)
    }
}

fn check_open(p: &Probability) -> Result<()> {
    if p.is_zero() || p.is_one() {
        return Err(Error::InvalidProbability { value: p.to_string() });
    }
    Ok(())
}

pub fn pac_rank(n: usize, m: usize, delta: &Probability, alpha: &Probability) -> Result<PacRank> {
    check_open(delta)?;
    check_open(alpha)?;
    let m_delta = QuantileTarget::new(delta.clone(), m)?.zeta();
    let pmf = quantile_rank_pmf(n, m, m_delta)?;
    let r = quantile_lower(&pmf, &alpha.complement())? as usize;
    Ok(PacRank { r, delta: delta.clone(), alpha: alpha.clone(), m_delta })
}

/// Threshold `T = S_(q)` for the rule "claim `y > c` when the prediction
/// exceeds `T`", with `q` the `1 - alpha` quantile of the `(m - eta)`-th
/// test rank.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionThreshold {
    pub threshold: ExtendedScore,
    pub q: usize,
    pub eta: usize,
    pub alpha: Probability,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionResult {
    pub threshold: ExtendedScore,
    pub selected: Vec<usize>,
    pub eta: usize,
    pub alpha: Probability,
}

/// Rank `q` of the selection threshold `S_(q)`.
pub fn selection_rank(n: usize, m: usize, eta: usize, alpha: &Probability) -> Result<usize> {
    check_open(alpha)?;
    if eta >= m {
        return Err(Error::EtaOutOfRange { eta, m });
    }
    let pmf = quantile_rank_pmf(n, m, m - eta)?;
    Ok(quantile_lower(&pmf, &alpha.complement())? as usize)
}

/// `null_scores` are `mu(x_i) * 1{y_i <= c}` over the calibration set with a
/// nonnegative predictor `mu`.
pub fn selection_threshold(
    null_scores: &CalibrationScores,
    m: usize,
    eta: usize,
    alpha: &Probability,
) -> Result<SelectionThreshold> {
    let q = selection_rank(null_scores.n(), m, eta, alpha)?;
    Ok(SelectionThreshold { threshold: null_scores.get(q), q, eta, alpha: alpha.clone() })
}

/// Indices with prediction strictly above the threshold.
pub fn select(predictions: &[f64], threshold: ExtendedScore) -> Result<Vec<usize>> {
    if let Some(&bad) = predictions.iter().find(|&&p| p.is_nan() || p < 0.0) {
        return Err(Error::NegativePrediction(bad));
    }
    Ok(predictions.iter().enumerate().filter(|(_, &p)| p > threshold.value()).map(|(j, _)| j).collect())
}

/// Threshold and selection in one call.
pub fn select_with_control(
    null_scores: &CalibrationScores,
    predictions: &[f64],
    eta: usize,
    alpha: &Probability,
) -> Result<SelectionResult> {
    let t = selection_threshold(null_scores, predictions.len(), eta, alpha)?;
    let selected = select(predictions, t.threshold)?;
    Ok(SelectionResult { threshold: t.threshold, selected, eta, alpha: t.alpha })
}

/// Maps an unbounded outcome into `(-1, 1)`.
pub fn tanh_transform(y: f64) -> f64 {
    y.tanh()
}

/// One unit of a two-arm study: features, treatment indicator, and the
/// observed outcome.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Observation {
    pub features: Vec<f64>,
    pub treated: bool,
    pub outcome: f64,
}

/// Quantity of the untreated outcomes of the treated units to bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum CounterfactualTarget {
    /// Upper bound on the mean.
    Mean,
    /// Two-sided interval for the `ceil(m / 2)`-th smallest value.
    Median,
    /// Simultaneous bounds for the listed order statistics.
    Quantiles(Vec<usize>),
    /// Bounds around the lower and upper quartiles.
    Quartiles,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum CounterfactualBounds {
    Interval(PredictionInterval),
    Multi(MultiQuantileBounds),
    Quartiles(QuartileBounds),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterfactualReport {
    pub bounds: CounterfactualBounds,
    pub n_control: usize,
    pub n_accepted: usize,
    pub m: usize,
}

impl CounterfactualReport {
    /// Whether the bounds hold for the realized counterfactual outcomes of
    /// the treated units.
    pub fn covers(&self, target: &CounterfactualTarget, outcomes: &[f64]) -> bool {
        let mut sorted = outcomes.to_vec();
        sorted.sort_by(f64::total_cmp);
        match (&self.bounds, target) {
            (CounterfactualBounds::Interval(iv), CounterfactualTarget::Mean) => {
                iv.contains(sorted.iter().sum::<f64>() / sorted.len() as f64)
            }
            (CounterfactualBounds::Interval(iv), _) => iv.contains(sorted[sorted.len().div_ceil(2) - 1]),
            (CounterfactualBounds::Multi(b), _) => b.covers(&sorted),
            (CounterfactualBounds::Quartiles(b), _) => b.covers(&sorted),
        }
    }
}

/// Bounds for the untreated outcomes of the treated units at level
/// `1 - alpha`.
///
/// The controls act as calibration data and the treated units as the test
/// batch. `propensity` gives the probability of being a control given the
/// features, with a known lower bound. Controls are thinned by rejection
/// sampling before the batch procedure runs.
pub fn counterfactual_interval(
    observed: &[Observation],
    propensity: &PropensityModel,
    target: &CounterfactualTarget,
    alpha: &Probability,
    outcome_range: ScoreBounds,
    seed: u64,
) -> Result<CounterfactualReport> {
    check_open(alpha)?;
    let controls: Vec<&Observation> = observed.iter().filter(|o| !o.treated).collect();
    let m = observed.len() - controls.len();
    if m == 0 {
        return Err(Error::NoTreatedUnits);
    }
    if controls.is_empty() {
        return Err(Error::NoControlUnits);
    }
    let features: Vec<Vec<f64>> = controls.iter().map(|o| o.features.clone()).collect();
    let mask = rejection_sample(&features, propensity, seed)?;
    let kept: Vec<f64> = controls.iter().zip(&mask).filter(|(_, &a)| a).map(|(o, _)| o.outcome).collect();
    let scores = CalibrationScores::with_bounds(&kept, outcome_range)?;
    let bounds = match target {
        CounterfactualTarget::Mean => CounterfactualBounds::Interval(batch_pi(
            &scores,
            m,
            &BatchScoreFn::Mean,
            &RankOrderFn::sum(),
            &Levels::upper(alpha.clone()),
            &EngineOptions::exact(),
        )?),
        CounterfactualTarget::Median => {
            let target = QuantileTarget::new(Probability::from_ratio(1, 2)?, m)?;
            CounterfactualBounds::Interval(quantile_interval(&scores, m, &target, &Levels::two_sided(alpha.clone()))?)
        }
        CounterfactualTarget::Quantiles(t_list) => {
            CounterfactualBounds::Multi(multi_quantile_bounds(&scores, m, t_list, alpha)?)
        }
        CounterfactualTarget::Quartiles => CounterfactualBounds::Quartiles(quartile_bounds(&scores, m, alpha)?),
    };
    Ok(CounterfactualReport { bounds, n_control: controls.len(), n_accepted: kept.len(), m })
}
