//! Batch inference on one or several order statistics of the test scores.
//!
//! For a single quantile the rank ordering `r -> r_(zeta)` reproduces the
//! ordering of the batch score exactly, so the interval has closed form.

use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::combinatorics::{box_count, multiset_coeff, quantile_rank_max_mass, quantile_rank_pmf, Count};
use crate::dist::{quantile_lower, quantile_upper_tail};
use crate::engine::{batch_pi, BatchScoreFn, EngineOptions, PredictionInterval, RankOrderFn};
use crate::error::{Error, Result};
use crate::types::{CalibrationScores, ExtendedScore, Levels, Probability};

/// Largest number of coordinates a sparse batch score may depend on.
pub const SPARSITY_CAP: usize = 3;

/// Above this many calibration points the expansion search bisects.
const LINEAR_SCAN_LIMIT: usize = 1000;

/// Target test quantile at level `1 - delta`, i.e. the `zeta`-th smallest of
/// `m` test scores with `zeta = ceil((1 - delta) m)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantileTarget {
    delta: Probability,
    zeta: usize,
}

impl QuantileTarget {
    pub fn new(delta: Probability, m: usize) -> Result<Self> {
        let zeta = ceil_to_usize(&(delta.complement().as_rational() * BigRational::from_integer(m.into())));
        if zeta == 0 || zeta > m {
            return Err(Error::ZetaOutOfRange { zeta, m });
        }
        Ok(QuantileTarget { delta, zeta })
    }

    pub fn delta(&self) -> &Probability {
        &self.delta
    }

    pub fn zeta(&self) -> usize {
        self.zeta
    }
}

fn ceil_to_usize(x: &BigRational) -> usize {
    x.ceil().to_integer().to_usize().unwrap_or(usize::MAX)
}

/// `round(num / den)` with halves rounded up.
pub fn round_half_up(num: u64, den: u64) -> u64 {
    (2 * num + den) / (2 * den)
}

/// Single-quantile interval with its rank thresholds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantileReport {
    pub interval: PredictionInterval,
    pub q_lower: usize,
    pub q_upper: usize,
}

/// Rank thresholds `(q_L, q_U)` of the `zeta`-th test rank; they depend on
/// the calibration set only through `n`.
pub fn quantile_ranks(n: usize, m: usize, target: &QuantileTarget, levels: &Levels) -> Result<(usize, usize)> {
    let pmf = quantile_rank_pmf(n, m, target.zeta)?;
    let q_lower = quantile_upper_tail(&pmf, levels.beta())? as usize;
    let q_upper = quantile_lower(&pmf, &levels.gamma().complement())? as usize;
    Ok((q_lower, q_upper))
}

/// `[S_(q_L - 1), S_(q_U)]` from the exact law of the `zeta`-th test rank.
pub fn quantile_interval_report(
    scores: &CalibrationScores,
    m: usize,
    target: &QuantileTarget,
    levels: &Levels,
) -> Result<QuantileReport> {
    let (q_lower, q_upper) = quantile_ranks(scores.n(), m, target, levels)?;
    let interval = PredictionInterval::new(scores.get(q_lower - 1), scores.get(q_upper), levels.clone())?;
    Ok(QuantileReport { interval, q_lower, q_upper })
}

pub fn quantile_interval(
    scores: &CalibrationScores,
    m: usize,
    target: &QuantileTarget,
    levels: &Levels,
) -> Result<PredictionInterval> {
    Ok(quantile_interval_report(scores, m, target, levels)?.interval)
}

/// Largest atom of the `zeta`-th rank law. Coverage of the quantile interval
/// exceeds its nominal level by at most this much when scores are distinct.
pub fn coverage_upper_epsilon(n: usize, m: usize, zeta: usize) -> Result<Probability> {
    Probability::from_rational(quantile_rank_max_mass(n, m, zeta)?)
}

/// Batch interval for a score that depends only on the order statistics at
/// positions `t_list`. Both quantile thresholds and endpoints are computed
/// over rank tuples of length `l = t_list.len()` weighted by level-set
/// counts, so the work grows like `n^l`.
pub fn sparse_batch_pi<H, O>(
    scores: &CalibrationScores,
    m: usize,
    t_list: &[usize],
    h_prime: H,
    order_prime: O,
    levels: &Levels,
    opts: &EngineOptions,
) -> Result<PredictionInterval>
where
    H: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    O: Fn(&[usize]) -> f64 + Send + Sync + 'static,
{
    if t_list.len() > SPARSITY_CAP {
        return Err(Error::SparsityCapExceeded { got: t_list.len(), cap: SPARSITY_CAP });
    }
    let h = BatchScoreFn::Sparse { support: t_list.to_vec(), reduced: Arc::new(h_prime) };
    let order = RankOrderFn::Sparse { support: t_list.to_vec(), reduced: Arc::new(order_prime) };
    batch_pi(scores, m, &h, &order, levels, opts)
}

/// Simultaneous bounds `L_j <= S^test_(t_j) <= U_j` for all `j`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiQuantileBounds {
    pub t_list: Vec<usize>,
    pub lower: Vec<ExtendedScore>,
    pub upper: Vec<ExtendedScore>,
    /// Centres `round(t_j n / m)` of the rank box.
    pub centers: Vec<usize>,
    /// Half-width of the smallest sufficient rank box.
    pub expansion: usize,
    pub alpha: Probability,
}

impl MultiQuantileBounds {
    /// Whether every target order statistic of `test` lies in its bounds.
    pub fn covers(&self, test_sorted: &[f64]) -> bool {
        self.t_list.iter().enumerate().all(|(j, &t)| {
            let v = test_sorted[t - 1];
            self.lower[j].value() <= v && v <= self.upper[j].value()
        })
    }
}

fn threshold(alpha: &Probability, n: usize, m: usize) -> BigRational {
    alpha.complement().as_rational() * BigRational::from_integer(BigInt::from(multiset_coeff(n as u64 + 1, m as u64)))
}

fn meets(count: &Count, need: &BigRational) -> bool {
    BigRational::from_integer(BigInt::from(count.clone())) >= *need
}

/// Smallest `a` in `0..=n + 1` with `count(a)` reaching `need`. `count` is
/// non-decreasing in `a` and reaches `|H|` at `a = n + 1`.
fn smallest_expansion<F>(n: usize, need: &BigRational, count: F) -> Result<usize>
where
    F: Fn(usize) -> Result<Count>,
{
    if n <= LINEAR_SCAN_LIMIT {
        for a in 0..=n + 1 {
            if meets(&count(a)?, need) {
                return Ok(a);
            }
        }
        return Ok(n + 1);
    }
    let (mut lo, mut hi) = (0usize, n + 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if meets(&count(mid)?, need) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

fn check_alpha(alpha: &Probability) -> Result<()> {
    if alpha.is_zero() || alpha.is_one() {
        return Err(Error::InvalidProbability { value: alpha.to_string() });
    }
    Ok(())
}

/// Box count with empty sides counted as zero.
fn box_or_zero(n: usize, m: usize, t_list: &[usize], w: &[usize], q: &[usize]) -> Result<Count> {
    if w.iter().zip(q).any(|(a, b)| a > b) {
        return Ok(Count::zero());
    }
    box_count(n, m, t_list, w, q)
}

/// Symmetric expansion of a rank box around the centres `round(t_j n / m)`
/// until it holds at least `(1 - alpha)` of the rank simplex.
pub fn multi_quantile_bounds(
    scores: &CalibrationScores,
    m: usize,
    t_list: &[usize],
    alpha: &Probability,
) -> Result<MultiQuantileBounds> {
    check_alpha(alpha)?;
    let n = scores.n();
    // validates t_list against m
    box_count(n, m, t_list, &vec![1; t_list.len()], &vec![n + 1; t_list.len()])?;
    let centers: Vec<usize> =
        t_list.iter().map(|&t| round_half_up((t * n) as u64, m as u64) as usize).collect();
    let corners = |a: usize| -> (Vec<usize>, Vec<usize>) {
        let w = centers.iter().map(|&c| c.saturating_sub(a).max(1)).collect();
        let q = centers.iter().map(|&c| (c + a).min(n + 1)).collect();
        (w, q)
    };
    let need = threshold(alpha, n, m);
    let t = smallest_expansion(n, &need, |a| {
        let (w, q) = corners(a);
        box_or_zero(n, m, t_list, &w, &q)
    })?;
    let lower = centers.iter().map(|&c| scores.get(c.saturating_sub(t + 1))).collect();
    let upper = centers.iter().map(|&c| scores.get((c + t).min(n + 1))).collect();
    Ok(MultiQuantileBounds {
        t_list: t_list.to_vec(),
        lower,
        upper,
        centers,
        expansion: t,
        alpha: alpha.clone(),
    })
}

/// Bounds `L <= S^test_(round(m/4)) <= S^test_(round(3m/4)) <= U`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuartileBounds {
    pub lower: ExtendedScore,
    pub upper: ExtendedScore,
    pub t_list: [usize; 2],
    pub centers: [usize; 2],
    pub expansion: usize,
}

impl QuartileBounds {
    pub fn covers(&self, test_sorted: &[f64]) -> bool {
        let [t1, t2] = self.t_list;
        self.lower.value() <= test_sorted[t1 - 1] && test_sorted[t2 - 1] <= self.upper.value()
    }

    /// Upper bound on the test interquartile range.
    pub fn iqr_bound(&self) -> f64 {
        self.upper.value() - self.lower.value()
    }
}

/// Quartile bounds: both target ranks must fall in the single window
/// `[round(n/4) - a, round(3n/4) + a]`, with `a` as small as possible.
pub fn quartile_bounds(scores: &CalibrationScores, m: usize, alpha: &Probability) -> Result<QuartileBounds> {
    check_alpha(alpha)?;
    if m < 2 {
        return Err(Error::ShapeMismatch("quartile bounds need m >= 2".into()));
    }
    let n = scores.n();
    let t_list = [round_half_up(m as u64, 4) as usize, round_half_up(3 * m as u64, 4) as usize];
    let centers = [round_half_up(n as u64, 4) as usize, round_half_up(3 * n as u64, 4) as usize];
    let need = threshold(alpha, n, m);
    let window = |a: usize| (centers[0].saturating_sub(a).max(1), (centers[1] + a).min(n + 1));
    let t = smallest_expansion(n, &need, |a| {
        let (lo, hi) = window(a);
        box_or_zero(n, m, &t_list, &[lo, lo], &[hi, hi])
    })?;
    Ok(QuartileBounds {
        lower: scores.get(centers[0].saturating_sub(t + 1)),
        upper: scores.get((centers[1] + t).min(n + 1)),
        t_list,
        centers,
        expansion: t,
    })
}

/// Exact share of the rank simplex inside a box, for diagnostics.
pub fn box_mass(n: usize, m: usize, t_list: &[usize], w: &[usize], q: &[usize]) -> Result<BigRational> {
    let count = box_or_zero(n, m, t_list, w, q)?;
    let total: BigUint = multiset_coeff(n as u64 + 1, m as u64);
    let g = count.gcd(&total);
    Ok(BigRational::new(BigInt::from(count / &g), BigInt::from(total / g)))
}
