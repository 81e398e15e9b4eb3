//! The batch prediction interval: quantiles of a rank-ordering function over
//! the rank simplex, then the extreme batch scores over the selected ranks.

mod dp;
mod oracle;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::combinatorics::{
    compositional_level_counts, for_each_rank_vector, level_set_count, multiset_coeff, quantile_rank_pmf, AddRanks,
    RankStep,
};
use crate::dist::{quantile_lower, quantile_upper_tail, DiscreteDist};
use crate::error::{Error, Result};
use crate::types::{CalibrationScores, ExtendedScore, Levels, Probability};

pub use dp::{dp_max_compositional, dp_max_sum};
pub use oracle::{oracle_batch_pi, OracleReport};

/// Function of a sorted batch of scores.
pub type ScoreFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Function of a non-decreasing rank vector.
pub type RankFn = Arc<dyn Fn(&[usize]) -> f64 + Send + Sync>;

/// Final map applied after folding a compositional step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Finish {
    Identity,
    /// Divide by the batch size, e.g. to turn a sum into a mean.
    DivideByLen,
}

impl Finish {
    fn apply(self, acc: f64, len: usize) -> f64 {
        match self {
            Finish::Identity => acc,
            Finish::DivideByLen => acc / len as f64,
        }
    }
}

/// A batch score computed by folding `step` over the sorted scores.
/// `step(acc, s)` must be non-decreasing in both arguments.
#[derive(Clone)]
pub struct ScoreStep {
    pub init: f64,
    pub step: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub finish: Finish,
}

impl ScoreStep {
    pub fn addition(finish: Finish) -> Self {
        ScoreStep { init: 0.0, step: Arc::new(|a, s| a + s), finish }
    }

    pub fn fold(&self, values: &[f64]) -> f64 {
        let acc = values.iter().fold(self.init, |a, &s| (self.step)(a, s));
        self.finish.apply(acc, values.len())
    }
}

/// Coordinate-wise monotone function of a sorted batch of scores.
#[derive(Clone)]
pub enum BatchScoreFn {
    Sum,
    Mean,
    /// The `zeta`-th smallest score (1-based).
    OrderStat(usize),
    /// A function of the order statistics at the listed positions only.
    Sparse { support: Vec<usize>, reduced: ScoreFn },
    Compositional(ScoreStep),
    Custom(ScoreFn),
}

impl fmt::Debug for BatchScoreFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchScoreFn::Sum => write!(f, "Sum"),
            BatchScoreFn::Mean => write!(f, "Mean"),
            BatchScoreFn::OrderStat(z) => write!(f, "OrderStat({z})"),
            BatchScoreFn::Sparse { support, .. } => write!(f, "Sparse({support:?})"),
            BatchScoreFn::Compositional(_) => write!(f, "Compositional"),
            BatchScoreFn::Custom(_) => write!(f, "Custom"),
        }
    }
}

fn pick(sorted: &[f64], support: &[usize]) -> Result<Vec<f64>> {
    support
        .iter()
        .map(|&t| {
            if t == 0 || t > sorted.len() {
                Err(Error::ZetaOutOfRange { zeta: t, m: sorted.len() })
            } else {
                Ok(sorted[t - 1])
            }
        })
        .collect()
}

impl BatchScoreFn {
    pub fn sparse<F>(support: Vec<usize>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        BatchScoreFn::Sparse { support, reduced: Arc::new(f) }
    }

    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        BatchScoreFn::Custom(Arc::new(f))
    }

    /// Evaluates on a non-decreasing batch. A NaN result (for instance
    /// `-inf + inf`) means the score is undefined there.
    pub fn eval(&self, sorted: &[f64]) -> Result<f64> {
        let v = match self {
            BatchScoreFn::Sum => sorted.iter().fold(0.0, |a, &s| a + s),
            BatchScoreFn::Mean => sorted.iter().fold(0.0, |a, &s| a + s) / sorted.len() as f64,
            BatchScoreFn::OrderStat(z) => pick(sorted, &[*z])?[0],
            BatchScoreFn::Sparse { support, reduced } => reduced(&pick(sorted, support)?),
            BatchScoreFn::Compositional(step) => step.fold(sorted),
            BatchScoreFn::Custom(f) => f(sorted),
        };
        if v.is_nan() {
            return Err(Error::UndefinedAtSentinels);
        }
        Ok(v)
    }

    /// The folding step, when the score is compositional.
    pub fn compositional(&self) -> Option<ScoreStep> {
        match self {
            BatchScoreFn::Sum => Some(ScoreStep::addition(Finish::Identity)),
            BatchScoreFn::Mean => Some(ScoreStep::addition(Finish::DivideByLen)),
            BatchScoreFn::Compositional(s) => Some(s.clone()),
            _ => None,
        }
    }

    /// Support positions and reduced function, when the score is sparse.
    pub fn sparse_view(&self) -> Option<(Vec<usize>, ScoreFn)> {
        match self {
            BatchScoreFn::OrderStat(z) => Some((vec![*z], Arc::new(|v: &[f64]| v[0]))),
            BatchScoreFn::Sparse { support, reduced } => Some((support.clone(), reduced.clone())),
            _ => None,
        }
    }

    /// Randomized check of coordinate-wise monotonicity on batches of size
    /// `m`: raises one coordinate at a time and compares.
    pub fn check_monotone(&self, m: usize, trials: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..trials {
            let mut v: Vec<f64> = (0..m).map(|_| rng.random_range(-10.0..10.0)).collect();
            v.sort_by(f64::total_cmp);
            let i = rng.random_range(0..m);
            let mut w = v.clone();
            w[i] += rng.random_range(0.0..5.0);
            w.sort_by(f64::total_cmp);
            let (a, b) = (self.eval(&v)?, self.eval(&w)?);
            if a > b {
                return Err(Error::NotMonotone(format!("{v:?} -> {a} but {w:?} -> {b}")));
            }
        }
        Ok(())
    }
}

/// Rank-ordering function on the rank simplex. It must not depend on the
/// calibration scores used in the same call.
#[derive(Clone)]
pub enum RankOrderFn {
    /// Fold of an integer step from zero, then `finish`.
    Compositional { step: Arc<dyn RankStep>, finish: Finish },
    /// The `zeta`-th rank.
    OrderStat(usize),
    /// A function of the ranks at the listed positions only.
    Sparse { support: Vec<usize>, reduced: RankFn },
    Custom(RankFn),
}

impl fmt::Debug for RankOrderFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankOrderFn::Compositional { finish, .. } => write!(f, "Compositional({finish:?})"),
            RankOrderFn::OrderStat(z) => write!(f, "OrderStat({z})"),
            RankOrderFn::Sparse { support, .. } => write!(f, "Sparse({support:?})"),
            RankOrderFn::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl RankOrderFn {
    pub fn sum() -> Self {
        RankOrderFn::Compositional { step: Arc::new(AddRanks), finish: Finish::Identity }
    }

    pub fn mean() -> Self {
        RankOrderFn::Compositional { step: Arc::new(AddRanks), finish: Finish::DivideByLen }
    }

    pub fn compositional<S: RankStep + 'static>(step: S) -> Self {
        RankOrderFn::Compositional { step: Arc::new(step), finish: Finish::Identity }
    }

    pub fn sparse<F>(support: Vec<usize>, f: F) -> Self
    where
        F: Fn(&[usize]) -> f64 + Send + Sync + 'static,
    {
        RankOrderFn::Sparse { support, reduced: Arc::new(f) }
    }

    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(&[usize]) -> f64 + Send + Sync + 'static,
    {
        RankOrderFn::Custom(Arc::new(f))
    }

    pub fn eval(&self, ranks: &[usize]) -> f64 {
        match self {
            RankOrderFn::Compositional { step, finish } => {
                let acc = ranks.iter().fold(0u64, |a, &r| step.apply(a, r as u64));
                finish.apply(acc as f64, ranks.len())
            }
            RankOrderFn::OrderStat(z) => ranks[z - 1] as f64,
            RankOrderFn::Sparse { support, reduced } => {
                let picked: Vec<usize> = support.iter().map(|&t| ranks[t - 1]).collect();
                reduced(&picked)
            }
            RankOrderFn::Custom(f) => f(ranks),
        }
    }

    fn sparse_view(&self) -> Option<(Vec<usize>, RankFn)> {
        match self {
            RankOrderFn::OrderStat(z) => Some((vec![*z], Arc::new(|r: &[usize]| r[0] as f64))),
            RankOrderFn::Sparse { support, reduced } => Some((support.clone(), reduced.clone())),
            _ => None,
        }
    }
}

/// Uses the batch score itself, applied to ranks, as the rank ordering.
pub fn rank_order_from_h(h: &BatchScoreFn) -> Result<RankOrderFn> {
    let as_scores = |r: &[usize]| r.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let order = match h {
        BatchScoreFn::Sum => RankOrderFn::sum(),
        BatchScoreFn::Mean => RankOrderFn::mean(),
        BatchScoreFn::OrderStat(z) => RankOrderFn::OrderStat(*z),
        BatchScoreFn::Sparse { support, reduced } => {
            let reduced = reduced.clone();
            RankOrderFn::Sparse { support: support.clone(), reduced: Arc::new(move |r| reduced(&as_scores(r))) }
        }
        BatchScoreFn::Compositional(_) | BatchScoreFn::Custom(_) => {
            for probe in [&[1.0][..], &[1.0, 2.0], &[1.0, 2.0, 3.0]] {
                if !h.eval(probe).map(f64::is_finite).unwrap_or(false) {
                    return Err(Error::HNotDefinedOnIntegers);
                }
            }
            let h = h.clone();
            RankOrderFn::Custom(Arc::new(move |r| h.eval(&as_scores(r)).unwrap_or(f64::NAN)))
        }
    };
    Ok(order)
}

/// Ranks are ordered by the batch score evaluated on an independent split.
///
/// Rank `r <= n` maps to the split order statistic at the same relative
/// position, `ceil(r * n_split / n)`, and rank `n + 1` to the upper score
/// bound. With `n_split == n` this is the split's `r`-th order statistic.
pub fn rank_order_from_split(h: &BatchScoreFn, split: &CalibrationScores, n: usize) -> Result<RankOrderFn> {
    if split.n() == 0 || split.n() < n {
        return Err(Error::SplitTooSmall { got: split.n(), need: n.max(1) });
    }
    let h = h.clone();
    let split = split.clone();
    let ns = split.n();
    Ok(RankOrderFn::Custom(Arc::new(move |r: &[usize]| {
        let vals: Vec<f64> = r
            .iter()
            .map(|&x| if x > n { split.bounds().upper } else { split.order_stat((x * ns).div_ceil(n)) })
            .collect();
        h.eval(&vals).unwrap_or(f64::NAN)
    })))
}

/// How the quantiles of the rank ordering are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Exact,
    /// Monte Carlo estimate from `count` uniform draws of sorted test ranks.
    Sampled { count: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngineOptions {
    pub mode: Mode,
    /// Largest rank simplex that may be enumerated.
    pub enumeration_cap: u64,
}

pub const DEFAULT_ENUMERATION_CAP: u64 = 200_000;

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { mode: Mode::Exact, enumeration_cap: DEFAULT_ENUMERATION_CAP }
    }
}

impl EngineOptions {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn sampled(count: usize, seed: u64) -> Self {
        EngineOptions { mode: Mode::Sampled { count, seed }, ..Self::default() }
    }
}

/// A prediction interval `[lower, upper]` for the batch score.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictionInterval {
    lower: ExtendedScore,
    upper: ExtendedScore,
    levels: Levels,
}

impl PredictionInterval {
    pub fn new(lower: ExtendedScore, upper: ExtendedScore, levels: Levels) -> Result<Self> {
        if lower > upper {
            return Err(Error::InvertedInterval { lower: lower.value(), upper: upper.value() });
        }
        Ok(PredictionInterval { lower, upper, levels })
    }

    pub fn lower(&self) -> ExtendedScore {
        self.lower
    }

    pub fn upper(&self) -> ExtendedScore {
        self.upper
    }

    pub fn levels(&self) -> &Levels {
        &self.levels
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower.value() <= v && v <= self.upper.value()
    }

    pub fn width(&self) -> f64 {
        self.upper.value() - self.lower.value()
    }
}

/// Interval together with the rank thresholds that produced it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchPiReport {
    pub interval: PredictionInterval,
    pub q_lower: f64,
    pub q_upper: f64,
}

fn check_enumeration(top: usize, m: usize, cap: u64) -> Result<()> {
    let size = multiset_coeff(top as u64, m as u64);
    if size > BigUint::from(cap) {
        return Err(Error::EnumerationCapExceeded { size: size.to_string(), cap });
    }
    Ok(())
}

fn check_batch(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::ShapeMismatch("batch size m must be positive".into()));
    }
    Ok(())
}

/// Non-decreasing `l`-tuples in `1..=top`, subject to the enumeration cap.
fn sparse_tuples(top: usize, l: usize, cap: u64) -> Result<Vec<Vec<usize>>> {
    check_enumeration(top, l, cap)?;
    let mut out = Vec::new();
    for_each_rank_vector(top, l, |r| out.push(r.to_vec()));
    Ok(out)
}

fn check_support(support: &[usize], m: usize) -> Result<()> {
    if support.is_empty() || support[0] == 0 || *support.last().unwrap() > m || support.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::ShapeMismatch(format!("support {support:?} is not strictly increasing in 1..={m}")));
    }
    Ok(())
}

/// Exact (or sampled) law of the rank ordering under the uniform law on the
/// `(n + 1, m)` rank simplex.
pub fn rank_value_distribution(order: &RankOrderFn, n: usize, m: usize, opts: &EngineOptions) -> Result<DiscreteDist> {
    check_batch(m)?;
    let top = n + 1;
    if let Mode::Sampled { count, seed } = opts.mode {
        if count < 1000 {
            return Err(Error::SampleCountTooSmall(count));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tally: BTreeMap<u64, (f64, u64)> = BTreeMap::new();
        let mut r = vec![0usize; m];
        for _ in 0..count {
            // uniform m-subset of 1..=n+m, shifted back onto the simplex
            let mut picks = rand::seq::index::sample(&mut rng, n + m, m).into_vec();
            picks.sort_unstable();
            for (i, (x, c)) in r.iter_mut().zip(&picks).enumerate() {
                *x = c + 1 - i;
            }
            let v = order.eval(&r);
            if v.is_nan() {
                return Err(Error::NaNInput { context: "rank ordering" });
            }
            tally.entry(v.to_bits()).or_insert((v, 0)).1 += 1;
        }
        return DiscreteDist::from_counts(tally.into_values().map(|(v, c)| (v, BigUint::from(c))));
    }
    match order {
        RankOrderFn::Compositional { step, finish } => {
            let counts = compositional_level_counts(step.as_ref(), m, top)?;
            DiscreteDist::from_counts(
                counts.counts.into_iter().enumerate().map(|(k, c)| (finish.apply(k as f64, m), c)),
            )
        }
        RankOrderFn::OrderStat(z) => quantile_rank_pmf(n, m, *z),
        RankOrderFn::Sparse { support, reduced } => {
            check_support(support, m)?;
            let tuples = sparse_tuples(top, support.len(), opts.enumeration_cap)?;
            let mut pairs = Vec::with_capacity(tuples.len());
            for rho in tuples {
                let v = reduced(&rho);
                if v.is_nan() {
                    return Err(Error::NaNInput { context: "rank ordering" });
                }
                pairs.push((v, level_set_count(n, m, support, &rho)?));
            }
            DiscreteDist::from_counts(pairs)
        }
        RankOrderFn::Custom(_) => {
            check_enumeration(top, m, opts.enumeration_cap)?;
            let mut pairs = Vec::new();
            let mut bad = false;
            for_each_rank_vector(top, m, |r| {
                let v = order.eval(r);
                bad |= v.is_nan();
                pairs.push((v, BigUint::one()));
            });
            if bad {
                return Err(Error::NaNInput { context: "rank ordering" });
            }
            DiscreteDist::from_counts(pairs)
        }
    }
}

/// `(q_L, q_U) = (Q'_beta, Q_{1-gamma})` of the rank-ordering law.
pub fn rank_quantiles(order: &RankOrderFn, n: usize, m: usize, levels: &Levels, opts: &EngineOptions) -> Result<(f64, f64)> {
    let dist = rank_value_distribution(order, n, m, opts)?;
    Ok((quantile_upper_tail(&dist, levels.beta())?, quantile_lower(&dist, &levels.gamma().complement())?))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Upper,
    Lower,
}

/// Score attached to rank `r` on each side: `S_(r)` for the upper endpoint
/// and `S_(r-1)` for the lower one.
fn side_score(scores: &CalibrationScores, side: Side, r: usize) -> f64 {
    match side {
        Side::Upper => scores.order_stat(r),
        Side::Lower => scores.order_stat(r - 1),
    }
}

fn endpoint(
    scores: &CalibrationScores,
    m: usize,
    h: &BatchScoreFn,
    order: &RankOrderFn,
    q: f64,
    side: Side,
    opts: &EngineOptions,
) -> Result<ExtendedScore> {
    check_batch(m)?;
    let n = scores.n();
    let top = n + 1;
    let admissible = |v: f64| match side {
        Side::Upper => v <= q,
        Side::Lower => v >= q,
    };
    let better = |cand: f64, cur: f64| match side {
        Side::Upper => cand > cur,
        Side::Lower => cand < cur,
    };

    if let (Some(hstep), RankOrderFn::Compositional { step, finish }) = (h.compositional(), order) {
        let values: Vec<f64> = (1..=top).map(|r| side_score(scores, side, r)).collect();
        let found = match side {
            Side::Upper => {
                let Some(t) = dp::acc_at_most(q, m, *finish) else {
                    return Err(Error::NoFeasibleRank(q.to_string()));
                };
                dp::max_below(&values, m, t, &hstep, step.as_ref())?
            }
            Side::Lower => match dp::acc_at_least(q, m, *finish) {
                Some(t) => dp::min_above(&values, m, t, &hstep, step.as_ref())?,
                None => None,
            },
        };
        let v = found.ok_or_else(|| Error::NoFeasibleRank(q.to_string()))?;
        let v = hstep.finish.apply(v, m);
        return ExtendedScore::new(v).map_err(|_| Error::UndefinedAtSentinels);
    }

    if let (Some((hs, hf)), Some((os, of))) = (h.sparse_view(), order.sparse_view()) {
        if hs == os {
            check_support(&hs, m)?;
            let mut best: Option<f64> = None;
            for rho in sparse_tuples(top, hs.len(), opts.enumeration_cap)? {
                if !admissible(of(&rho)) {
                    continue;
                }
                let vals: Vec<f64> = rho.iter().map(|&r| side_score(scores, side, r)).collect();
                let v = hf(&vals);
                if v.is_nan() {
                    return Err(Error::UndefinedAtSentinels);
                }
                if best.is_none_or(|b| better(v, b)) {
                    best = Some(v);
                }
            }
            let v = best.ok_or_else(|| Error::NoFeasibleRank(q.to_string()))?;
            return ExtendedScore::new(v);
        }
    }

    check_enumeration(top, m, opts.enumeration_cap)?;
    let mut best: Option<f64> = None;
    let mut failure: Option<Error> = None;
    let mut vals = vec![0.0; m];
    for_each_rank_vector(top, m, |r| {
        if failure.is_some() || !admissible(order.eval(r)) {
            return;
        }
        for (slot, &x) in vals.iter_mut().zip(r) {
            *slot = side_score(scores, side, x);
        }
        match h.eval(&vals) {
            Ok(v) => {
                if best.is_none_or(|b| better(v, b)) {
                    best = Some(v);
                }
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let v = best.ok_or_else(|| Error::NoFeasibleRank(q.to_string()))?;
    ExtendedScore::new(v)
}

/// `B_U = max { h(S_(r_1), ..., S_(r_m)) : order(r) <= q_upper }`.
pub fn endpoint_upper(
    scores: &CalibrationScores,
    m: usize,
    h: &BatchScoreFn,
    order: &RankOrderFn,
    q_upper: f64,
    opts: &EngineOptions,
) -> Result<ExtendedScore> {
    endpoint(scores, m, h, order, q_upper, Side::Upper, opts)
}

/// `B_L = min { h(S_(r_1 - 1), ..., S_(r_m - 1)) : order(r) >= q_lower }`.
pub fn endpoint_lower(
    scores: &CalibrationScores,
    m: usize,
    h: &BatchScoreFn,
    order: &RankOrderFn,
    q_lower: f64,
    opts: &EngineOptions,
) -> Result<ExtendedScore> {
    endpoint(scores, m, h, order, q_lower, Side::Lower, opts)
}

/// Batch prediction interval with the rank thresholds used.
pub fn batch_pi_report(
    scores: &CalibrationScores,
    m: usize,
    h: &BatchScoreFn,
    order: &RankOrderFn,
    levels: &Levels,
    opts: &EngineOptions,
) -> Result<BatchPiReport> {
    let (q_lower, q_upper) = rank_quantiles(order, scores.n(), m, levels, opts)?;
    let lower = endpoint_lower(scores, m, h, order, q_lower, opts)?;
    let upper = endpoint_upper(scores, m, h, order, q_upper, opts)?;
    Ok(BatchPiReport { interval: PredictionInterval::new(lower, upper, levels.clone())?, q_lower, q_upper })
}

/// Prediction interval for `h` of the `m` sorted test scores, with coverage
/// at least `1 - alpha` under exchangeability.
pub fn batch_pi(
    scores: &CalibrationScores,
    m: usize,
    h: &BatchScoreFn,
    order: &RankOrderFn,
    levels: &Levels,
    opts: &EngineOptions,
) -> Result<PredictionInterval> {
    Ok(batch_pi_report(scores, m, h, order, levels, opts)?.interval)
}

/// Upper bound `B` with `P(h(test) <= B) >= 1 - alpha`.
pub fn batch_pi_one_sided(
    scores: &CalibrationScores,
    m: usize,
    h: &BatchScoreFn,
    order: &RankOrderFn,
    alpha: &Probability,
    opts: &EngineOptions,
) -> Result<ExtendedScore> {
    let dist = rank_value_distribution(order, scores.n(), m, opts)?;
    let q = quantile_lower(&dist, &alpha.complement())?;
    endpoint_upper(scores, m, h, order, q, opts)
}

#[cfg(test)]
mod tests;
