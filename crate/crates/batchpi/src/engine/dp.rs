//! Dynamic programs for extreme compositional batch scores over the rank
//! vectors whose compositional rank value satisfies a threshold.

use crate::combinatorics::{accumulator_ranges, check_step_contract, AddRanks, RankStep};
use crate::error::{Error, Result};
use crate::types::{CalibrationScores, ExtendedScore};

use super::{Finish, ScoreStep};

/// Largest accumulator `a` whose finished rank value is `<= q`.
pub(super) fn acc_at_most(q: f64, m: usize, finish: Finish) -> Option<u64> {
    if q.is_nan() || q < 0.0 {
        return None;
    }
    if q == f64::INFINITY || q >= u64::MAX as f64 / 4.0 {
        return Some(u64::MAX / 4);
    }
    let value = |a: u64| finish.apply(a as f64, m);
    let mut a = match finish {
        Finish::Identity => q.floor() as u64,
        Finish::DivideByLen => (q * m as f64).floor() as u64,
    };
    while value(a + 1) <= q {
        a += 1;
    }
    while value(a) > q {
        if a == 0 {
            return None;
        }
        a -= 1;
    }
    Some(a)
}

/// Smallest accumulator `a` whose finished rank value is `>= q`.
pub(super) fn acc_at_least(q: f64, m: usize, finish: Finish) -> Option<u64> {
    if q.is_nan() || q == f64::INFINITY {
        return None;
    }
    if q <= 0.0 {
        return Some(0);
    }
    let value = |a: u64| finish.apply(a as f64, m);
    let mut a = match finish {
        Finish::Identity => q.ceil() as u64,
        Finish::DivideByLen => (q * m as f64).ceil() as u64,
    };
    while a > 0 && value(a - 1) >= q {
        a -= 1;
    }
    while value(a) < q {
        a += 1;
    }
    Some(a)
}

/// Maximum of the folded (unfinished) score over rank vectors of length `m`
/// with entries in `1..=values.len()` whose rank accumulator is `<= limit`.
/// `values[r - 1]` is the score attached to rank `r`.
pub(super) fn max_below(
    values: &[f64],
    m: usize,
    limit: u64,
    hstep: &ScoreStep,
    order: &dyn RankStep,
) -> Result<Option<f64>> {
    let top = values.len();
    let ranges = accumulator_ranges(order, m, top);
    if m > 0 && top > 0 {
        check_step_contract(order, top, ranges[m - 1].1)?;
    }
    let mut rows: Vec<Vec<Option<f64>>> = (0..=m).map(|j| vec![None; ranges[j].1 as usize + 1]).collect();
    rows[0][0] = Some(hstep.init);
    for (idx, &s) in values.iter().enumerate() {
        let a = idx as u64 + 1;
        for j in 1..=m {
            let (prev, cur) = rows.split_at_mut(j);
            let prev = &prev[j - 1];
            let prev_top = prev.len() as u64 - 1;
            for (q, slot) in cur[0].iter_mut().enumerate() {
                let Some(x) = order.floor_inverse(q as u64, a) else { continue };
                if let Some(v) = prev[x.min(prev_top) as usize] {
                    let cand = (hstep.step)(v, s);
                    if cand.is_nan() {
                        return Err(Error::UndefinedAtSentinels);
                    }
                    if slot.is_none_or(|cur| cand > cur) {
                        *slot = Some(cand);
                    }
                }
            }
        }
    }
    let last = &rows[m];
    Ok(last[limit.min(last.len() as u64 - 1) as usize])
}

/// Minimum of the folded score over rank vectors whose rank accumulator is
/// `>= limit`. Same conventions as [`max_below`].
pub(super) fn min_above(
    values: &[f64],
    m: usize,
    limit: u64,
    hstep: &ScoreStep,
    order: &dyn RankStep,
) -> Result<Option<f64>> {
    let top = values.len();
    let ranges = accumulator_ranges(order, m, top);
    if m > 0 && top > 0 {
        check_step_contract(order, top, ranges[m - 1].1)?;
    }
    if limit > ranges[m].1 {
        return Ok(None);
    }
    let mut rows: Vec<Vec<Option<f64>>> = (0..=m).map(|j| vec![None; ranges[j].1 as usize + 1]).collect();
    rows[0][0] = Some(hstep.init);
    for (idx, &s) in values.iter().enumerate() {
        let a = idx as u64 + 1;
        for j in 1..=m {
            let (prev, cur) = rows.split_at_mut(j);
            let prev = &prev[j - 1];
            for (q, slot) in cur[0].iter_mut().enumerate() {
                let x = order.ceil_inverse(q as u64, a);
                if let Some(Some(v)) = prev.get(x as usize) {
                    let cand = (hstep.step)(*v, s);
                    if cand.is_nan() {
                        return Err(Error::UndefinedAtSentinels);
                    }
                    if slot.is_none_or(|cur| cand < cur) {
                        *slot = Some(cand);
                    }
                }
            }
        }
    }
    Ok(rows[m][limit as usize])
}

/// `max { S_(r_1) + ... + S_(r_m) : r_1 + ... + r_m <= q }` over rank vectors
/// with entries in `1..=n` (no sentinel rank).
pub fn dp_max_sum(scores: &CalibrationScores, m: usize, q: u64) -> Result<ExtendedScore> {
    if q < m as u64 {
        return Err(Error::QTooSmall { q, min: m as u64 });
    }
    dp_max_compositional(scores, m, q, &ScoreStep::addition(Finish::Identity), &AddRanks)
}

/// `max { h(S_(r)) : order(r) <= q }` for a compositional batch score and a
/// compositional rank ordering, over entries in `1..=n`. `q` is in
/// accumulator units of `order_step`.
pub fn dp_max_compositional(
    scores: &CalibrationScores,
    m: usize,
    q: u64,
    h_step: &ScoreStep,
    order_step: &dyn RankStep,
) -> Result<ExtendedScore> {
    let v = max_below(scores.sorted(), m, q, h_step, order_step)?
        .ok_or_else(|| Error::NoFeasibleRank(q.to_string()))?;
    ExtendedScore::new(h_step.finish.apply(v, m))
}
