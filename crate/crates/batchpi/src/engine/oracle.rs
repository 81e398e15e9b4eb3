//! Reference implementation by exhaustive enumeration of the rank simplex.
//! Deliberately shares no quantile or dispatch code with the engine.

use num_bigint::BigInt;
use serde::Serialize;

use crate::combinatorics::{for_each_rank_vector, multiset_coeff};
use crate::error::{Error, Result};
use crate::types::{CalibrationScores, ExtendedScore, Levels};

use super::{BatchScoreFn, PredictionInterval, RankOrderFn};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub q_lower: f64,
    pub q_upper: f64,
    pub interval: PredictionInterval,
    /// Number of rank vectors visited.
    pub evaluations: u64,
}

/// Enumerates every rank vector, sorts the rank-ordering values and reads
/// off both quantiles with integer arithmetic, then scans again for the
/// endpoints.
pub fn oracle_batch_pi(
    scores: &CalibrationScores,
    m: usize,
    h: &BatchScoreFn,
    order: &RankOrderFn,
    levels: &Levels,
    cap: u64,
) -> Result<OracleReport> {
    let top = scores.n() + 1;
    let size = multiset_coeff(top as u64, m as u64);
    if size > cap.into() {
        return Err(Error::EnumerationCapExceeded { size: size.to_string(), cap });
    }
    let mut ranks: Vec<Vec<usize>> = Vec::new();
    for_each_rank_vector(top, m, |r| ranks.push(r.to_vec()));
    let values: Vec<f64> = ranks.iter().map(|r| order.eval(r)).collect();
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NaNInput { context: "rank ordering" });
    }
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let total = BigInt::from(sorted.len());

    // q_U: smallest v with #{x <= v} / N >= 1 - gamma
    let gamma = levels.gamma().as_rational();
    let need_upper = (gamma.denom() - gamma.numer()) * &total;
    let mut q_upper = None;
    for (i, &v) in sorted.iter().enumerate() {
        let last_of_run = i + 1 == sorted.len() || sorted[i + 1] != v;
        if last_of_run && BigInt::from(i + 1) * gamma.denom() >= need_upper {
            q_upper = Some(v);
            break;
        }
    }
    // q_L: largest v with #{x >= v} / N >= 1 - beta
    let beta = levels.beta().as_rational();
    let need_lower = (beta.denom() - beta.numer()) * &total;
    let mut q_lower = None;
    for i in (0..sorted.len()).rev() {
        let v = sorted[i];
        let first_of_run = i == 0 || sorted[i - 1] != v;
        if first_of_run && BigInt::from(sorted.len() - i) * beta.denom() >= need_lower {
            q_lower = Some(v);
            break;
        }
    }
    let (q_lower, q_upper) = match (q_lower, q_upper) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::TauOutOfRange { tau: levels.alpha().to_string() }),
    };

    let mut upper = f64::NEG_INFINITY;
    let mut lower = f64::INFINITY;
    let mut seen_upper = false;
    let mut seen_lower = false;
    for (r, &v) in ranks.iter().zip(&values) {
        if v <= q_upper {
            let s: Vec<f64> = r.iter().map(|&x| scores.order_stat(x)).collect();
            let b = h.eval(&s)?;
            if !seen_upper || b > upper {
                upper = b;
                seen_upper = true;
            }
        }
        if v >= q_lower {
            let s: Vec<f64> = r.iter().map(|&x| scores.order_stat(x - 1)).collect();
            let b = h.eval(&s)?;
            if !seen_lower || b < lower {
                lower = b;
                seen_lower = true;
            }
        }
    }
    let interval = PredictionInterval::new(ExtendedScore::new(lower)?, ExtendedScore::new(upper)?, levels.clone())?;
    Ok(OracleReport { q_lower, q_upper, interval, evaluations: ranks.len() as u64 })
}
