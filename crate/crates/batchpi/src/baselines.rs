//! Comparison methods: partitioning into groups, subset enumeration of split
//! conformal scores, per-point Bonferroni bounds, the Markov-adjusted PAC
//! rank, a McDiarmid interval for the mean, and p-value based selection.

use itertools::Itertools;
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial, multiset_coeff};
use crate::dist::{make_discrete_dist, quantile_lower, quantile_upper_tail, DiscreteDist};
use crate::engine::{BatchScoreFn, PredictionInterval};
use crate::error::{Error, Result};
use crate::types::{CalibrationScores, ExtendedScore, Levels, Probability, ScoreBounds};

/// Calibration scores cut into `q = floor(n / m)` groups of size `m`; the
/// remainder is dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedScores {
    groups: Vec<Vec<f64>>,
}

impl GroupedScores {
    /// Groups consecutive scores in the given order.
    pub fn new(raw: &[f64], m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::ShapeMismatch("group size must be positive".into()));
        }
        let groups = raw.chunks_exact(m).map(|c| c.to_vec()).collect();
        Ok(GroupedScores { groups })
    }

    /// Groups after a seeded shuffle.
    pub fn shuffled(raw: &[f64], m: usize, seed: u64) -> Result<Self> {
        let mut v = raw.to_vec();
        v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self::new(&v, m)
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// `h` applied to each sorted group.
    pub fn values(&self, h: &BatchScoreFn) -> Result<Vec<f64>> {
        self.groups
            .iter()
            .map(|g| {
                let mut g = g.clone();
                g.sort_by(f64::total_cmp);
                h.eval(&g)
            })
            .collect()
    }
}

fn atoms_with(values: &[f64], extra: f64) -> Result<DiscreteDist> {
    let mut v = values.to_vec();
    v.push(extra);
    DiscreteDist::uniform(&v)
}

/// Split conformal over group values: `[Q'_beta, Q_{1-gamma}]` of the
/// `q + 1` atoms obtained by adding the range endpoint on each side.
pub fn partition_baseline(g_values: &[f64], levels: &Levels, range: ScoreBounds) -> Result<PredictionInterval> {
    let lo = quantile_upper_tail(&atoms_with(g_values, range.lower)?, levels.beta())?;
    let hi = quantile_lower(&atoms_with(g_values, range.upper)?, &levels.gamma().complement())?;
    PredictionInterval::new(ExtendedScore::new(lo)?, ExtendedScore::new(hi)?, levels.clone())
}

/// `h` at a batch containing sentinel scores, with the supremum (or
/// infimum) of `h` substituted where `h` is undefined.
fn eval_or(h: &BatchScoreFn, batch: &[f64], fallback: f64) -> Result<f64> {
    match h.eval(batch) {
        Ok(v) => Ok(v),
        Err(Error::UndefinedAtSentinels) => Ok(fallback),
        Err(e) => Err(e),
    }
}

fn check_cap(n: usize, m: usize, cap: u64) -> Result<()> {
    let size = multiset_coeff(n as u64 + 1, m as u64);
    if size > BigUint::from(cap) {
        return Err(Error::EnumerationCapExceeded { size: size.to_string(), cap });
    }
    Ok(())
}

/// Split conformal extended to size-`m` subsets of the `n + m` scores, where
/// the test scores are replaced by the score bounds.
///
/// A subset with `j` calibration points and `m - j` test points has weight
/// `C(m, m - j)`, so only calibration subsets are enumerated.
pub fn extended_split_conformal(
    scores: &CalibrationScores,
    m: usize,
    h: &BatchScoreFn,
    levels: &Levels,
    cap: u64,
) -> Result<PredictionInterval> {
    let n = scores.n();
    check_cap(n, m, cap)?;
    let bounds = scores.bounds();
    let sorted = scores.sorted();
    let mut upper_pairs: Vec<(f64, BigUint)> = Vec::new();
    let mut lower_pairs: Vec<(f64, BigUint)> = Vec::new();
    for j in 0..=m.min(n) {
        let k = m - j;
        let weight = binomial(m as u64, k as u64);
        for combo in (0..n).combinations(j) {
            let chosen: Vec<f64> = combo.iter().map(|&i| sorted[i]).collect();
            let mut bar = chosen.clone();
            bar.extend(std::iter::repeat_n(bounds.upper, k));
            let mut under = vec![bounds.lower; k];
            under.extend(chosen);
            upper_pairs.push((eval_or(h, &bar, f64::INFINITY)?, weight.clone()));
            lower_pairs.push((eval_or(h, &under, f64::NEG_INFINITY)?, weight.clone()));
        }
    }
    let hi = quantile_lower(&DiscreteDist::from_counts(upper_pairs)?, &levels.gamma().complement())?;
    let lo = quantile_upper_tail(&DiscreteDist::from_counts(lower_pairs)?, levels.beta())?;
    PredictionInterval::new(ExtendedScore::new(lo)?, ExtendedScore::new(hi)?, levels.clone())
}

/// Same construction with subset weights proportional to the product of
/// per-point weights over the subset. `weights` covers the `n` calibration
/// points followed by the `m` test points.
pub(crate) fn weighted_subset_interval(
    scores: &CalibrationScores,
    m: usize,
    h: &BatchScoreFn,
    levels: &Levels,
    weights: &[BigRational],
    cap: u64,
) -> Result<PredictionInterval> {
    let n = scores.n();
    if weights.len() != n + m {
        return Err(Error::ShapeMismatch(format!("{} weights for {} points", weights.len(), n + m)));
    }
    let size = binomial((n + m) as u64, m as u64);
    if size > BigUint::from(cap) {
        return Err(Error::EnumerationCapExceeded { size: size.to_string(), cap });
    }
    let bounds = scores.bounds();
    let raw = scores.raw();
    let mut upper_pairs = Vec::new();
    let mut lower_pairs = Vec::new();
    let mut total = BigRational::zero();
    for subset in (0..n + m).combinations(m) {
        let w: BigRational = subset.iter().map(|&i| weights[i].clone()).product();
        let mut bar: Vec<f64> = subset.iter().map(|&i| if i < n { raw[i] } else { bounds.upper }).collect();
        let mut under: Vec<f64> = subset.iter().map(|&i| if i < n { raw[i] } else { bounds.lower }).collect();
        bar.sort_by(f64::total_cmp);
        under.sort_by(f64::total_cmp);
        total += &w;
        upper_pairs.push((eval_or(h, &bar, f64::INFINITY)?, w.clone()));
        lower_pairs.push((eval_or(h, &under, f64::NEG_INFINITY)?, w));
    }
    if total.is_zero() {
        return Err(Error::MassSumNotOne { sum: "0".into() });
    }
    let normalize = |pairs: Vec<(f64, BigRational)>| -> Vec<(f64, BigRational)> {
        pairs.into_iter().map(|(v, w)| (v, w / &total)).collect()
    };
    let hi = quantile_lower(&make_discrete_dist(&normalize(upper_pairs))?, &levels.gamma().complement())?;
    let lo = quantile_upper_tail(&make_discrete_dist(&normalize(lower_pairs))?, levels.beta())?;
    PredictionInterval::new(ExtendedScore::new(lo)?, ExtendedScore::new(hi)?, levels.clone())
}

/// Per-point split conformal bounds at levels `beta / m` and `gamma / m`,
/// combined through `h` applied to the repeated bound.
pub fn bonferroni_baseline(
    scores: &CalibrationScores,
    m: usize,
    h: &BatchScoreFn,
    levels: &Levels,
) -> Result<PredictionInterval> {
    if m == 0 {
        return Err(Error::ShapeMismatch("batch size m must be positive".into()));
    }
    let bounds = scores.bounds();
    let per_lo = quantile_upper_tail(&atoms_with(scores.sorted(), bounds.lower)?, &levels.beta().div_int(m as u64))?;
    let per_hi = quantile_lower(
        &atoms_with(scores.sorted(), bounds.upper)?,
        &levels.gamma().div_int(m as u64).complement(),
    )?;
    let lo = eval_or(h, &vec![per_lo; m], f64::NEG_INFINITY)?;
    let hi = eval_or(h, &vec![per_hi; m], f64::INFINITY)?;
    PredictionInterval::new(ExtendedScore::new(lo)?, ExtendedScore::new(hi)?, levels.clone())
}

/// Rank `ceil((1 - delta alpha)(n + 1))` of per-point split conformal at the
/// level that makes Markov's inequality give the PAC guarantee.
pub fn markov_pac_rank(n: usize, delta: &Probability, alpha: &Probability) -> Result<usize> {
    let da = delta.as_rational() * alpha.as_rational();
    if da.is_zero() || da >= BigRational::from_integer(1.into()) {
        return Err(Error::InvalidProbability { value: da.to_string() });
    }
    let one = BigRational::from_integer(1.into());
    let r = ((one - da) * BigRational::from_integer(BigInt::from(n + 1))).ceil().to_integer();
    Ok(r.to_usize().expect("rank fits in usize").min(n + 1))
}

/// Rank `ceil((1 - delta)(n + 1))` of split conformal at miscoverage `delta`.
pub fn split_conformal_rank(n: usize, delta: &Probability) -> usize {
    let r = (delta.complement().as_rational() * BigRational::from_integer(BigInt::from(n + 1))).ceil().to_integer();
    r.to_usize().expect("rank fits in usize").min(n + 1)
}

fn check_outcomes(outcomes: &[f64], a: f64, b: f64) -> Result<()> {
    if a.partial_cmp(&b) != Some(std::cmp::Ordering::Less) {
        return Err(Error::InvertedInterval { lower: a, upper: b });
    }
    for &y in outcomes {
        if y.is_nan() || y < a || y > b {
            return Err(Error::OutcomeOutOfRange { value: y, a, b });
        }
    }
    Ok(())
}

fn check_open_unit(alpha: &Probability) -> Result<()> {
    if alpha.is_zero() || alpha.is_one() {
        return Err(Error::InvalidProbability { value: alpha.to_string() });
    }
    Ok(())
}

/// McDiarmid half-width `(b - a) sqrt((1/n + 1/m) log(1/tail) / 2)`.
fn mcdiarmid_half_width(n: usize, m: usize, a: f64, b: f64, tail: f64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    (b - a) * (0.5 * (1.0 / n as f64 + 1.0 / m as f64) * (1.0 / tail).ln()).sqrt()
}

fn clipped(center: f64, lo_width: f64, hi_width: f64, a: f64, b: f64, levels: Levels) -> Result<PredictionInterval> {
    let lo = if lo_width.is_finite() { (center - lo_width).max(a) } else { a };
    let hi = if hi_width.is_finite() { (center + hi_width).min(b) } else { b };
    PredictionInterval::new(ExtendedScore::new(lo)?, ExtendedScore::new(hi)?, levels)
}

/// Two-sided concentration interval for the mean of `m` test outcomes in
/// `[a, b]`, intersected with `[a, b]`. Valid for i.i.d. data.
pub fn concentration_mean_interval(
    cal_outcomes: &[f64],
    m: usize,
    a: f64,
    b: f64,
    alpha: &Probability,
) -> Result<PredictionInterval> {
    check_outcomes(cal_outcomes, a, b)?;
    check_open_unit(alpha)?;
    let n = cal_outcomes.len();
    let center = if n == 0 { (a + b) / 2.0 } else { cal_outcomes.iter().sum::<f64>() / n as f64 };
    let w = mcdiarmid_half_width(n, m, a, b, alpha.to_f64() / 2.0);
    clipped(center, w, w, a, b, Levels::two_sided(alpha.clone()))
}

/// One-sided version: `[a, mean + (b - a) sqrt((1/n + 1/m) log(1/alpha) / 2)]`.
pub fn concentration_mean_upper(
    cal_outcomes: &[f64],
    m: usize,
    a: f64,
    b: f64,
    alpha: &Probability,
) -> Result<PredictionInterval> {
    check_outcomes(cal_outcomes, a, b)?;
    check_open_unit(alpha)?;
    let n = cal_outcomes.len();
    let center = if n == 0 { a } else { cal_outcomes.iter().sum::<f64>() / n as f64 };
    let w = mcdiarmid_half_width(n, m, a, b, alpha.to_f64());
    clipped(center, f64::INFINITY, w, a, b, Levels::upper(alpha.clone()))
}

/// Which conformal p-value feeds the k-FWER selection rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PValueVariant {
    /// Residual-based: counts calibration points with
    /// `c - mu(x_test) > y_i - mu(x_i)`.
    JinCandes,
    /// Counts calibration nulls (`y_i <= c`) predicted above the test point.
    JinRen,
}

fn null_counts(cal: &[(f64, f64)], test_predictions: &[f64], c: f64, variant: PValueVariant) -> Vec<usize> {
    test_predictions
        .iter()
        .map(|&mu| match variant {
            PValueVariant::JinCandes => cal.iter().filter(|&&(mu_i, y)| c - mu > y - mu_i).count(),
            PValueVariant::JinRen => cal.iter().filter(|&&(mu_i, y)| mu < mu_i && y <= c).count(),
        })
        .collect()
}

/// Conformal p-values of the test points for the nulls `y <= c`.
pub fn conformal_pvalues(cal: &[(f64, f64)], test_predictions: &[f64], c: f64, variant: PValueVariant) -> Vec<f64> {
    let denom = (cal.len() + 1) as f64;
    null_counts(cal, test_predictions, c, variant).into_iter().map(|k| (k + 1) as f64 / denom).collect()
}

/// Selects the test points with `p_j <= (k + 1) alpha / m`, which keeps the
/// probability of more than `k` false claims at most `alpha`. `cal` holds
/// `(prediction, outcome)` pairs.
pub fn kfwer_pvalue_selection(
    cal: &[(f64, f64)],
    test_predictions: &[f64],
    c: f64,
    k: usize,
    alpha: &Probability,
    variant: PValueVariant,
) -> Vec<usize> {
    let m = test_predictions.len();
    if m == 0 {
        return Vec::new();
    }
    let bound = alpha.as_rational() * BigRational::new(BigInt::from(k + 1), BigInt::from(m));
    let n1 = BigInt::from(cal.len() + 1);
    null_counts(cal, test_predictions, c, variant)
        .into_iter()
        .enumerate()
        .filter(|&(_, count)| BigRational::new(BigInt::from(count + 1), n1.clone()) <= bound)
        .map(|(j, _)| j)
        .collect()
}
