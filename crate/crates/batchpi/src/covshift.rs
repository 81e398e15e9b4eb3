//! Batch inference when calibration and test features come from different
//! distributions but share the conditional law of the outcome.
//!
//! Rejection sampling thins the calibration set so that the retained points
//! are exchangeable with the test points, after which the ordinary batch
//! procedure applies.

use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baselines::weighted_subset_interval;
use crate::engine::{batch_pi_report, BatchScoreFn, EngineOptions, PredictionInterval, RankOrderFn};
use crate::error::{Error, Result};
use crate::types::{CalibrationScores, Levels, ScoreBounds};

pub type PropensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Probability `p(x)` that a point with features `x` belongs to the
/// calibration (observed) group, with a known pointwise lower bound `c`.
#[derive(Clone)]
pub struct PropensityModel {
    eval: PropensityFn,
    lower_bound: f64,
}

impl fmt::Debug for PropensityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PropensityModel").field("lower_bound", &self.lower_bound).finish_non_exhaustive()
    }
}

impl PropensityModel {
    pub fn new<F>(lower_bound: f64, eval: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if !(lower_bound > 0.0 && lower_bound < 1.0) {
            return Err(Error::InvalidProbability { value: lower_bound.to_string() });
        }
        Ok(PropensityModel { eval: Arc::new(eval), lower_bound })
    }

    /// `p(x) = c` everywhere.
    pub fn constant(c: f64) -> Result<Self> {
        Self::new(c, move |_| c)
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    /// `p(x)`, checked against the lower bound.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let p = (self.eval)(x);
        if p.is_nan() || p > 1.0 {
            return Err(Error::InvalidProbability { value: p.to_string() });
        }
        if p < self.lower_bound {
            return Err(Error::PropensityBelowBound { p, c: self.lower_bound });
        }
        Ok(p)
    }

    /// Odds `(1 - p(x)) / p(x)`, proportional to the test-to-calibration
    /// density ratio.
    pub fn odds(&self, x: &[f64]) -> Result<f64> {
        let p = self.eval(x)?;
        Ok((1.0 - p) / p)
    }
}

/// Acceptance probability `(c / (1 - c)) (1 - p(x)) / p(x)`.
pub fn acceptance_probability(model: &PropensityModel, x: &[f64]) -> Result<f64> {
    let c = model.lower_bound;
    let p = model.eval(x)?;
    // p >= c keeps this at most one up to rounding
    Ok((c / (1.0 - c) * (1.0 - p) / p).clamp(0.0, 1.0))
}

/// Independent Bernoulli acceptance decisions, one per calibration point.
pub fn rejection_sample(features: &[Vec<f64>], model: &PropensityModel, seed: u64) -> Result<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    features
        .iter()
        .map(|x| {
            let a = acceptance_probability(model, x)?;
            let u: f64 = rng.random();
            Ok(u < a)
        })
        .collect()
}

/// Interval computed on the retained calibration points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovShiftReport {
    pub interval: PredictionInterval,
    pub accepted: Vec<bool>,
    pub n_accepted: usize,
}

/// Calibration points as features and score, in matching order.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftedCalibration {
    pub features: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    pub bounds: ScoreBounds,
}

/// Rejection sampling followed by the batch procedure on the retained
/// points. An empty retained set gives the interval between the score
/// bounds.
#[allow(clippy::too_many_arguments)]
pub fn batch_pi_covshift(
    cal: &ShiftedCalibration,
    m: usize,
    model: &PropensityModel,
    h: &BatchScoreFn,
    order: &RankOrderFn,
    levels: &Levels,
    opts: &EngineOptions,
    seed: u64,
) -> Result<CovShiftReport> {
    if cal.features.len() != cal.scores.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows for {} scores",
            cal.features.len(),
            cal.scores.len()
        )));
    }
    let accepted = rejection_sample(&cal.features, model, seed)?;
    let kept: Vec<f64> = cal.scores.iter().zip(&accepted).filter(|(_, &a)| a).map(|(&s, _)| s).collect();
    let scores = CalibrationScores::with_bounds(&kept, cal.bounds)?;
    let report = batch_pi_report(&scores, m, h, order, levels, opts)?;
    Ok(CovShiftReport { interval: report.interval, n_accepted: kept.len(), accepted })
}

/// Split conformal with subset weights proportional to the product of the
/// odds over each size-`m` subset of the `n + m` points. Only feasible on
/// small instances.
pub fn weighted_conformal_extended(
    cal: &ShiftedCalibration,
    test_features: &[Vec<f64>],
    model: &PropensityModel,
    h: &BatchScoreFn,
    levels: &Levels,
    cap: u64,
) -> Result<PredictionInterval> {
    let scores = CalibrationScores::with_bounds(&cal.scores, cal.bounds)?;
    let weights = cal
        .features
        .iter()
        .chain(test_features)
        .map(|x| {
            let o = model.odds(x)?;
            BigRational::from_float(o).ok_or(Error::NaNInput { context: "propensity odds" })
        })
        .collect::<Result<Vec<_>>>()?;
    weighted_subset_interval(&scores, test_features.len(), h, levels, &weights, cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::extended_split_conformal;
    use crate::dist::{make_discrete_dist, quantile_lower, quantile_upper_tail};
    use crate::engine::{batch_pi, DEFAULT_ENUMERATION_CAP};
    use crate::types::{ExtendedScore, Probability};
    use itertools::Itertools;

    fn p(s: &str) -> Probability {
        s.parse().unwrap()
    }

    fn two_point() -> PropensityModel {
        PropensityModel::new(0.4, |x| if x[0] == 0.0 { 0.8 } else { 0.4 }).unwrap()
    }

    #[test]
    fn acceptance_examples() {
        let c = PropensityModel::constant(0.3).unwrap();
        assert_eq!(acceptance_probability(&c, &[1.0]).unwrap(), 1.0);
        let m = PropensityModel::new(0.2, |_| 0.5).unwrap();
        assert!((acceptance_probability(&m, &[]).unwrap() - 0.25).abs() < 1e-15);
        let one = PropensityModel::new(0.2, |_| 1.0).unwrap();
        assert_eq!(acceptance_probability(&one, &[]).unwrap(), 0.0);
        let tp = two_point();
        assert!((acceptance_probability(&tp, &[0.0]).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((acceptance_probability(&tp, &[1.0]).unwrap() - 1.0).abs() < 1e-15);
        let low = PropensityModel::new(0.5, |_| 0.3).unwrap();
        assert_eq!(acceptance_probability(&low, &[]), Err(Error::PropensityBelowBound { p: 0.3, c: 0.5 }));
        assert!(PropensityModel::constant(0.0).is_err());
    }

    #[test]
    fn acceptance_decreases_in_propensity() {
        let c = 0.1;
        let mut last = f64::INFINITY;
        for i in 10..=100 {
            let pi = i as f64 / 100.0;
            let m = PropensityModel::new(c, move |_| pi).unwrap();
            let a = acceptance_probability(&m, &[]).unwrap();
            assert!((0.0..=1.0).contains(&a));
            assert!(a <= last);
            last = a;
        }
    }

    #[test]
    fn masks() {
        let feats: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let c = PropensityModel::constant(0.25).unwrap();
        assert!(rejection_sample(&feats, &c, 3).unwrap().iter().all(|&b| b));
        assert!(rejection_sample(&[], &two_point(), 3).unwrap().is_empty());
        let a = rejection_sample(&feats, &PropensityModel::new(0.2, |_| 0.5).unwrap(), 9).unwrap();
        assert_eq!(a, rejection_sample(&feats, &PropensityModel::new(0.2, |_| 0.5).unwrap(), 9).unwrap());
    }

    fn calibration(scores: &[f64]) -> ShiftedCalibration {
        ShiftedCalibration {
            features: scores.iter().map(|&s| vec![s]).collect(),
            scores: scores.to_vec(),
            bounds: ScoreBounds::default(),
        }
    }

    #[test]
    fn constant_propensity_is_plain_batch_pi() {
        let raw: Vec<f64> = (0..30).map(|i| ((i * 7) % 30) as f64).collect();
        let cal = calibration(&raw);
        let levels = Levels::upper(p("0.1"));
        let model = PropensityModel::constant(0.6).unwrap();
        let r = batch_pi_covshift(&cal, 4, &model, &BatchScoreFn::Mean, &RankOrderFn::sum(), &levels, &EngineOptions::exact(), 1)
            .unwrap();
        assert_eq!(r.n_accepted, 30);
        let s = CalibrationScores::new(&raw).unwrap();
        let plain = batch_pi(&s, 4, &BatchScoreFn::Mean, &RankOrderFn::sum(), &levels, &EngineOptions::exact()).unwrap();
        assert_eq!(r.interval, plain);
    }

    #[test]
    fn empty_retained_set_is_trivial() {
        let cal = ShiftedCalibration {
            features: vec![vec![0.0]; 5],
            scores: vec![0.5; 5],
            bounds: ScoreBounds::new(0.0, 1.0).unwrap(),
        };
        let model = PropensityModel::new(0.2, |_| 1.0).unwrap();
        let r = batch_pi_covshift(
            &cal,
            3,
            &model,
            &BatchScoreFn::Mean,
            &RankOrderFn::sum(),
            &Levels::upper(p("0.1")),
            &EngineOptions::exact(),
            0,
        )
        .unwrap();
        assert_eq!(r.n_accepted, 0);
        assert_eq!(r.interval.upper().value(), 1.0);
        assert_eq!(r.interval.lower().value(), 0.0);
    }

    #[test]
    fn uniform_weights_reduce_to_extended_split() {
        let raw = [0.3, 1.2, -0.4, 2.0, 0.9];
        let cal = calibration(&raw);
        let test = vec![vec![0.0]; 3];
        let levels = Levels::parse("0.2", "0.1", "0.1").unwrap();
        let model = PropensityModel::constant(0.5).unwrap();
        let a = weighted_conformal_extended(&cal, &test, &model, &BatchScoreFn::Mean, &levels, DEFAULT_ENUMERATION_CAP).unwrap();
        let s = CalibrationScores::new(&raw).unwrap();
        let b = extended_split_conformal(&s, 3, &BatchScoreFn::Mean, &levels, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weighted_trivial_when_n_equals_m() {
        let raw = [0.3, 1.2, -0.4, 2.0];
        let cal = calibration(&raw);
        let test: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let model = PropensityModel::new(0.2, |x| 0.3 + 0.1 * x[0]).unwrap();
        let iv = weighted_conformal_extended(&cal, &test, &model, &BatchScoreFn::Mean, &Levels::upper(p("0.1")), DEFAULT_ENUMERATION_CAP)
            .unwrap();
        assert_eq!(iv.upper(), ExtendedScore::POS_INF);
    }

    #[test]
    fn weighted_matches_direct_subset_enumeration() {
        let raw = [0.3, 1.2, -0.4, 2.0, 0.9, 1.6];
        let cal = calibration(&raw);
        let test: Vec<Vec<f64>> = vec![vec![0.5], vec![2.5]];
        let model = PropensityModel::new(0.1, |x| 0.2 + 0.25 * x[0].abs().min(3.0)).unwrap();
        let levels = Levels::parse("0.3", "0.1", "0.2").unwrap();
        let got = weighted_conformal_extended(&cal, &test, &model, &BatchScoreFn::Sum, &levels, DEFAULT_ENUMERATION_CAP).unwrap();

        // independent route: per-point odds in f64 combined as exact ratios
        let all: Vec<Vec<f64>> = cal.features.iter().chain(&test).cloned().collect();
        let odds: Vec<BigRational> = all
            .iter()
            .map(|x| {
                let q = 0.2 + 0.25 * x[0].abs().min(3.0);
                BigRational::from_float((1.0 - q) / q).unwrap()
            })
            .collect();
        let n = raw.len();
        let mut ups = Vec::new();
        let mut downs = Vec::new();
        for subset in (0..n + 2).combinations(2) {
            let w: BigRational = subset.iter().map(|&i| odds[i].clone()).product();
            let bar: f64 = subset.iter().map(|&i| if i < n { raw[i] } else { f64::INFINITY }).sum();
            let under: f64 = subset.iter().map(|&i| if i < n { raw[i] } else { f64::NEG_INFINITY }).sum();
            ups.push((bar, w.clone()));
            downs.push((under, w));
        }
        let total: BigRational = ups.iter().map(|(_, w)| w.clone()).sum();
        let norm = |v: Vec<(f64, BigRational)>| v.into_iter().map(|(a, w)| (a, w / &total)).collect::<Vec<_>>();
        let hi = quantile_lower(&make_discrete_dist(&norm(ups)).unwrap(), &levels.gamma().complement()).unwrap();
        let lo = quantile_upper_tail(&make_discrete_dist(&norm(downs)).unwrap(), levels.beta()).unwrap();
        assert_eq!((got.lower().value(), got.upper().value()), (lo, hi));
    }
}
