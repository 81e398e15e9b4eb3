//! Exact counting over rank simplices.
//!
//! A rank simplex of size `(N, m)` is the set of non-decreasing m-tuples with
//! entries in `1..=N`. The batch procedures work with `N = n + 1`.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dist::DiscreteDist;
use crate::error::{Error, Result};

/// Exact nonnegative integer count.
pub type Count = BigUint;

/// `C(n, k)`, zero when `k > n`.
pub fn binomial(n: u64, k: u64) -> Count {
    if k > n {
        return Count::zero();
    }
    let k = k.min(n - k);
    let mut acc = Count::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Number of size-`r` multisets drawn from `n` items, `C(n + r - 1, r)`.
pub fn multiset_coeff(n: u64, r: u64) -> Count {
    if r == 0 {
        return Count::one();
    }
    if n == 0 {
        return Count::zero();
    }
    binomial(n + r - 1, r)
}

/// Number of rank vectors in the `(n + 1, m)` simplex whose `zeta`-th entry
/// equals `k`, for `k = 1..=n+1`.
pub fn quantile_rank_counts(n: usize, m: usize, zeta: usize) -> Result<Vec<Count>> {
    if zeta == 0 || zeta > m {
        return Err(Error::ZetaOutOfRange { zeta, m });
    }
    let (n, m, z) = (n as u64, m as u64, zeta as u64);
    Ok((1..=n + 1)
        .map(|k| binomial(k + z - 2, z - 1) * binomial(n + m + 1 - k - z, m - z))
        .collect())
}

/// Law of the `zeta`-th smallest test rank when the test ranks are uniform on
/// the `(n + 1, m)` simplex.
pub fn quantile_rank_pmf(n: usize, m: usize, zeta: usize) -> Result<DiscreteDist> {
    let counts = quantile_rank_counts(n, m, zeta)?;
    DiscreteDist::from_counts(counts.into_iter().enumerate().map(|(i, c)| ((i + 1) as f64, c)))
}

/// Largest atom of [`quantile_rank_pmf`].
pub fn quantile_rank_max_mass(n: usize, m: usize, zeta: usize) -> Result<BigRational> {
    Ok(quantile_rank_pmf(n, m, zeta)?.max_mass())
}

/// Counts of `1 <= r_1 <= ... <= r_m <= n` by their sum, indexed by the sum
/// (entries below `m` are zero). Uses the Gaussian binomial generating
/// function `[n - 1 + m choose m]_q`.
pub fn partition_counts(m: usize, n: usize) -> Vec<Count> {
    if m == 0 {
        return vec![Count::one()];
    }
    if n == 0 {
        return vec![Count::zero()];
    }
    let width = n - 1;
    let mut poly: Vec<num_bigint::BigInt> = vec![num_bigint::BigInt::one()];
    for i in 1..=m {
        // multiply by (1 - q^(width + i))
        let shift = width + i;
        let mut next = poly.clone();
        next.resize(poly.len() + shift, num_bigint::BigInt::zero());
        for (j, c) in poly.iter().enumerate() {
            next[j + shift] -= c;
        }
        // divide by (1 - q^i); the quotient is a polynomial of degree width*i
        let deg = width * i;
        let mut out = vec![num_bigint::BigInt::zero(); deg + 1];
        for j in 0..=deg {
            let mut v = next[j].clone();
            if j >= i {
                v += &out[j - i];
            }
            out[j] = v;
        }
        poly = out;
    }
    let mut counts = vec![Count::zero(); m];
    counts.extend(poly.into_iter().map(|c| c.to_biguint().expect("coefficients are nonnegative")));
    counts
}

/// Number of `1 <= r_1 <= ... <= r_m <= n` with `r_1 + ... + r_m = k`.
pub fn partition_count(m: usize, n: usize, k: usize) -> Count {
    partition_counts(m, n).get(k).cloned().unwrap_or_default()
}

/// One step of a compositional rank-ordering function: the value of a rank
/// vector is obtained by folding `apply` over its entries from an initial
/// accumulator of zero.
///
/// `apply(., r)` must be strictly increasing for every rank `r`.
pub trait RankStep: Send + Sync {
    fn apply(&self, acc: u64, rank: u64) -> u64;

    /// The accumulator `a` with `apply(a, rank) == target`, if any.
    fn inverse(&self, target: u64, rank: u64) -> Option<u64> {
        let a = self.floor_inverse(target, rank)?;
        (self.apply(a, rank) == target).then_some(a)
    }

    /// Largest `a` with `apply(a, rank) <= target`.
    fn floor_inverse(&self, target: u64, rank: u64) -> Option<u64> {
        let base = self.apply(0, rank);
        if base > target {
            return None;
        }
        // strict monotonicity gives apply(a) >= a + apply(0)
        let (mut lo, mut hi) = (0u64, target - base);
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if self.apply(mid, rank) <= target {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        Some(lo)
    }

    /// Smallest `a` with `apply(a, rank) >= target`.
    fn ceil_inverse(&self, target: u64, rank: u64) -> u64 {
        match self.floor_inverse(target, rank) {
            None => 0,
            Some(a) if self.apply(a, rank) == target => a,
            Some(a) => a + 1,
        }
    }

    /// Level counts over the `(n, m)` simplex when a closed form is known.
    fn closed_form_counts(&self, _m: usize, _n: usize) -> Option<Vec<Count>> {
        None
    }
}

/// The additive step `a + r`, giving the sum of ranks.
#[derive(Clone, Copy, Debug, Default)]
pub struct AddRanks;

impl RankStep for AddRanks {
    fn apply(&self, acc: u64, rank: u64) -> u64 {
        acc + rank
    }

    fn inverse(&self, target: u64, rank: u64) -> Option<u64> {
        target.checked_sub(rank)
    }

    fn floor_inverse(&self, target: u64, rank: u64) -> Option<u64> {
        target.checked_sub(rank)
    }

    fn ceil_inverse(&self, target: u64, rank: u64) -> u64 {
        target.saturating_sub(rank)
    }

    fn closed_form_counts(&self, m: usize, n: usize) -> Option<Vec<Count>> {
        Some(partition_counts(m, n))
    }
}

/// A step given by a closure; inverses fall back to bisection.
pub struct FnStep<F>(pub F);

impl<F> RankStep for FnStep<F>
where
    F: Fn(u64, u64) -> u64 + Send + Sync,
{
    fn apply(&self, acc: u64, rank: u64) -> u64 {
        (self.0)(acc, rank)
    }
}

/// Smallest and largest accumulator after each of `m` steps over ranks `1..=n`.
pub fn accumulator_ranges(step: &dyn RankStep, m: usize, n: usize) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(m + 1);
    out.push((0u64, 0u64));
    for _ in 0..m {
        let (lo, hi) = *out.last().unwrap();
        let nlo = (1..=n as u64).map(|r| step.apply(lo, r)).min().unwrap_or(lo);
        let nhi = (1..=n as u64).map(|r| step.apply(hi, r)).max().unwrap_or(hi);
        out.push((nlo, nhi));
    }
    out
}

/// Spot-checks strict monotonicity and inverse consistency with 100 draws
/// per rank from a fixed-seed generator.
pub fn check_step_contract(step: &dyn RankStep, n: usize, max_acc: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x005e_ed0f_57e9);
    for r in 1..=n as u64 {
        for _ in 0..100 {
            let a = rng.random_range(0..=max_acc);
            let here = step.apply(a, r);
            if step.apply(a + 1, r) <= here || step.inverse(here, r) != Some(a) {
                return Err(Error::StepContractViolated { acc: a, rank: r });
            }
        }
    }
    Ok(())
}

/// Counts of rank vectors in the `(n, m)` simplex by compositional value.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelCounts {
    /// `counts[k]` is the number of vectors whose folded value is `k`.
    pub counts: Vec<Count>,
}

impl LevelCounts {
    pub fn get(&self, k: u64) -> Count {
        self.counts.get(k as usize).cloned().unwrap_or_default()
    }

    pub fn total(&self) -> Count {
        self.counts.iter().sum()
    }
}

/// Counts of rank vectors in the `(n, m)` simplex for every value of the
/// compositional function built from `step`.
///
/// The table is filled rank by rank; after processing rank `a`, row `j`
/// holds counts over vectors of length `j` whose entries are all `<= a`.
pub fn compositional_level_counts(step: &dyn RankStep, m: usize, n: usize) -> Result<LevelCounts> {
    let ranges = accumulator_ranges(step, m, n);
    let width = ranges[m].1 as usize;
    if m > 0 && n > 0 {
        check_step_contract(step, n, ranges[m - 1].1)?;
    }
    if let Some(counts) = step.closed_form_counts(m, n) {
        return Ok(LevelCounts { counts });
    }
    let mut rows: Vec<Vec<Count>> = (0..=m).map(|j| vec![Count::zero(); ranges[j].1 as usize + 1]).collect();
    rows[0][0] = Count::one();
    for a in 1..=n as u64 {
        for j in 1..=m {
            let (prev, cur) = rows.split_at_mut(j);
            let prev = &prev[j - 1];
            for (k, slot) in cur[0].iter_mut().enumerate() {
                if let Some(src) = step.inverse(k as u64, a) {
                    if let Some(c) = prev.get(src as usize) {
                        if !c.is_zero() {
                            *slot += c;
                        }
                    }
                }
            }
        }
    }
    let mut counts = rows.pop().unwrap();
    counts.truncate(width + 1);
    Ok(LevelCounts { counts })
}

/// Number of rank vectors in the `(n, m)` simplex with compositional value `k`.
pub fn compositional_level_count(step: &dyn RankStep, m: usize, n: usize, k: u64) -> Result<Count> {
    Ok(compositional_level_counts(step, m, n)?.get(k))
}

fn check_t_list(m: usize, t_list: &[usize]) -> Result<()> {
    if t_list.is_empty() {
        return Err(Error::ShapeMismatch("empty list of target ranks".into()));
    }
    if t_list[0] == 0 || *t_list.last().unwrap() > m || t_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::ShapeMismatch(format!("target ranks {t_list:?} are not strictly increasing in 1..={m}")));
    }
    Ok(())
}

/// Number of rank vectors in the `(n + 1, m)` simplex with `r_{t_j} = rho_j`
/// for every `j`.
pub fn level_set_count(n: usize, m: usize, t_list: &[usize], rho_list: &[usize]) -> Result<Count> {
    check_t_list(m, t_list)?;
    if rho_list.len() != t_list.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} target ranks but {} rank values",
            t_list.len(),
            rho_list.len()
        )));
    }
    if rho_list[0] == 0 || *rho_list.last().unwrap() > n + 1 || rho_list.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::ShapeMismatch(format!("rank values {rho_list:?} are not non-decreasing in 1..={}", n + 1)));
    }
    let l = t_list.len();
    let mut acc = multiset_coeff(rho_list[0] as u64, (t_list[0] - 1) as u64);
    for j in 0..l - 1 {
        let gap = (t_list[j + 1] - t_list[j] - 1) as u64;
        acc *= multiset_coeff((rho_list[j + 1] - rho_list[j] + 1) as u64, gap);
    }
    acc *= multiset_coeff((n + 2 - rho_list[l - 1]) as u64, (m - t_list[l - 1]) as u64);
    Ok(acc)
}

/// `mc[x] = multiset_coeff(x, r)` for `x = 0..=max`.
fn multiset_row(max: usize, r: u64) -> Vec<Count> {
    let mut row = Vec::with_capacity(max + 1);
    row.push(multiset_coeff(0, r));
    if max == 0 {
        return row;
    }
    let mut cur = multiset_coeff(1, r);
    row.push(cur.clone());
    for x in 1..max as u64 {
        // C(x + r, r) = C(x + r - 1, r) * (x + r) / x
        cur = cur * (x + r) / x;
        row.push(cur.clone());
    }
    row
}

/// Number of rank vectors in the `(n + 1, m)` simplex with
/// `w_j <= r_{t_j} <= q_j` for every `j`.
pub fn box_count(n: usize, m: usize, t_list: &[usize], w_list: &[usize], q_list: &[usize]) -> Result<Count> {
    check_t_list(m, t_list)?;
    let l = t_list.len();
    if w_list.len() != l || q_list.len() != l {
        return Err(Error::BoxInvalid(format!(
            "{} target ranks but {} lower and {} upper corners",
            l,
            w_list.len(),
            q_list.len()
        )));
    }
    for j in 0..l {
        if w_list[j] == 0 || w_list[j] > q_list[j] || q_list[j] > n + 1 {
            return Err(Error::BoxInvalid(format!(
                "side {j}: need 1 <= {} <= {} <= {}",
                w_list[j],
                q_list[j],
                n + 1
            )));
        }
    }
    let top = n + 2;
    let head = multiset_row(top, (t_list[0] - 1) as u64);
    // weights[rho] for rho in 1..=n+1 at the current coordinate
    let mut weights: Vec<Count> = vec![Count::zero(); n + 2];
    let first = w_list[0]..=q_list[0];
    weights[first.clone()].clone_from_slice(&head[first]);
    for j in 1..l {
        let gap = multiset_row(top, (t_list[j] - t_list[j - 1] - 1) as u64);
        let mut next = vec![Count::zero(); n + 2];
        for rho in w_list[j]..=q_list[j] {
            let mut acc = Count::zero();
            for prev in w_list[j - 1]..=q_list[j - 1].min(rho) {
                if !weights[prev].is_zero() {
                    acc += &weights[prev] * &gap[rho - prev + 1];
                }
            }
            next[rho] = acc;
        }
        weights = next;
    }
    let tail = multiset_row(top, (m - t_list[l - 1]) as u64);
    Ok((w_list[l - 1]..=q_list[l - 1]).map(|rho| &weights[rho] * &tail[n + 2 - rho]).sum())
}

/// Calls `f` on every non-decreasing `m`-tuple with entries in `1..=top`, in
/// lexicographic order.
pub fn for_each_rank_vector<F: FnMut(&[usize])>(top: usize, m: usize, mut f: F) {
    if m == 0 {
        f(&[]);
        return;
    }
    if top == 0 {
        return;
    }
    let mut r = vec![1usize; m];
    loop {
        f(&r);
        let mut i = m;
        while i > 0 && r[i - 1] == top {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        let v = r[i - 1] + 1;
        for x in &mut r[i - 1..] {
            *x = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use proptest::prelude::*;

    fn c(x: u64) -> Count {
        Count::from(x)
    }

    fn brute_sum_counts(m: usize, n: usize) -> Vec<Count> {
        let mut out = vec![Count::zero(); m * n + 1];
        for_each_rank_vector(n, m, |r| out[r.iter().sum::<usize>()] += 1u32);
        out
    }

    #[test]
    fn multiset_examples() {
        assert_eq!(multiset_coeff(4, 2), c(10));
        assert_eq!(multiset_coeff(7, 0), c(1));
        assert_eq!(multiset_coeff(0, 0), c(1));
        assert_eq!(multiset_coeff(1, 5), c(1));
        assert_eq!(multiset_coeff(0, 3), c(0));
        assert_eq!(binomial(50, 10), c(10_272_278_170));
    }

    #[test]
    fn rank_pmf_examples() {
        let d = quantile_rank_pmf(1, 1, 1).unwrap();
        assert_eq!(d.atoms().map(|(_, p)| p).collect::<Vec<_>>(), vec![BigRational::new(1.into(), 2.into()); 2]);

        let d = quantile_rank_pmf(3, 2, 2).unwrap();
        let expected: Vec<(f64, BigRational)> =
            (1..=4).map(|k| (k as f64, BigRational::new(BigInt::from(k), BigInt::from(10)))).collect();
        assert_eq!(d.atoms().collect::<Vec<_>>(), expected);

        let d = quantile_rank_pmf(9, 1, 1).unwrap();
        assert!(d.atoms().all(|(_, p)| p == BigRational::new(1.into(), 10.into())));
        assert_eq!(d.len(), 10);

        assert!(quantile_rank_pmf(3, 2, 0).is_err());
        assert!(quantile_rank_pmf(3, 2, 3).is_err());
    }

    #[test]
    fn rank_pmf_sums_to_one_on_grid() {
        for n in (0..=300).step_by(37) {
            for m in (1usize..=300).step_by(41) {
                for zeta in [1, m.div_ceil(2), m] {
                    let total: Count = quantile_rank_counts(n, m, zeta).unwrap().into_iter().sum();
                    assert_eq!(total, binomial((n + m) as u64, m as u64), "n={n} m={m} zeta={zeta}");
                }
            }
        }
    }

    #[test]
    fn rank_pmf_max_mass_bound() {
        // max mass <= m * C(m-1, zeta-1) * (1/n) * (1 + m/n)^(m-1)
        for n in [5usize, 10, 40, 100, 300] {
            for m in [1usize, 2, 5, 10] {
                for zeta in [1, m.div_ceil(2), m] {
                    let eps = quantile_rank_max_mass(n, m, zeta).unwrap();
                    let eps = num_traits::ToPrimitive::to_f64(&eps).unwrap();
                    let lead = m as f64 * num_traits::ToPrimitive::to_f64(&binomial(m as u64 - 1, zeta as u64 - 1)).unwrap();
                    let bound = lead / n as f64 * (1.0 + m as f64 / n as f64).powi(m as i32 - 1);
                    assert!(eps <= bound + 1e-12, "n={n} m={m} zeta={zeta}: {eps} > {bound}");
                }
            }
        }
        // without the leading factor the bound fails already at n=5, m=2
        let eps = quantile_rank_max_mass(5, 2, 1).unwrap();
        assert_eq!(eps, BigRational::new(6.into(), 21.into()));
        assert!(num_traits::ToPrimitive::to_f64(&eps).unwrap() > 0.2 * 1.4);
    }

    #[test]
    fn partition_examples() {
        assert_eq!(partition_count(2, 3, 4), c(2));
        assert_eq!(partition_counts(2, 3).iter().sum::<Count>(), c(6));
        assert_eq!(partition_count(1, 5, 3), c(1));
        assert_eq!(partition_count(2, 3, 1), c(0));
        assert_eq!(partition_count(2, 3, 7), c(0));
        assert_eq!(partition_counts(3, 0).iter().sum::<Count>(), c(0));
    }

    #[test]
    fn partition_matches_enumeration() {
        for m in 1..=6 {
            for n in 1..=8 {
                assert_eq!(partition_counts(m, n), brute_sum_counts(m, n), "m={m} n={n}");
            }
        }
    }

    #[test]
    fn generic_dp_matches_closed_form() {
        let generic = FnStep(|a: u64, r: u64| a + r);
        for m in 1..=30 {
            for n in (1..=30).step_by(3) {
                let dp = compositional_level_counts(&generic, m, n).unwrap();
                let closed = partition_counts(m, n);
                assert_eq!(dp.counts, closed, "m={m} n={n}");
            }
        }
    }

    #[test]
    fn compositional_examples() {
        assert_eq!(compositional_level_count(&AddRanks, 2, 3, 4).unwrap(), c(2));
        let squares = FnStep(|a: u64, r: u64| a + r * r);
        assert_eq!(compositional_level_count(&squares, 2, 2, 5).unwrap(), c(1));
        // base case: every rank is solvable for an additive step
        let counts = compositional_level_counts(&squares, 1, 6).unwrap();
        assert_eq!(counts.total(), c(6));
        // out-of-range queries are zero
        assert_eq!(compositional_level_count(&squares, 2, 2, 1000).unwrap(), c(0));
    }

    #[test]
    fn compositional_matches_enumeration() {
        let step = FnStep(|a: u64, r: u64| 2 * a + r * r);
        for m in 1..=4 {
            for n in 1..=6 {
                let counts = compositional_level_counts(&step, m, n).unwrap();
                let mut brute = vec![Count::zero(); counts.counts.len()];
                for_each_rank_vector(n, m, |r| {
                    let v = r.iter().fold(0u64, |a, &x| step.apply(a, x as u64));
                    brute[v as usize] += 1u32;
                });
                assert_eq!(counts.counts, brute, "m={m} n={n}");
            }
        }
    }

    #[test]
    fn contract_violation_detected() {
        let flat = FnStep(|a: u64, r: u64| a / 2 + r);
        assert!(matches!(
            compositional_level_counts(&flat, 3, 4),
            Err(Error::StepContractViolated { .. })
        ));
    }

    #[test]
    fn floor_and_ceil_inverse() {
        let step = FnStep(|a: u64, r: u64| 3 * a + r);
        assert_eq!(step.floor_inverse(10, 1), Some(3));
        assert_eq!(step.floor_inverse(9, 1), Some(2));
        assert_eq!(step.floor_inverse(0, 1), None);
        assert_eq!(step.ceil_inverse(10, 1), 3);
        assert_eq!(step.ceil_inverse(11, 1), 4);
        assert_eq!(step.inverse(11, 1), None);
    }

    #[test]
    fn level_set_examples() {
        assert_eq!(level_set_count(3, 2, &[1, 2], &[1, 3]).unwrap(), c(1));
        let (n, m, zeta) = (7, 4, 3);
        let counts = quantile_rank_counts(n, m, zeta).unwrap();
        for rho in 1..=n + 1 {
            assert_eq!(level_set_count(n, m, &[zeta], &[rho]).unwrap(), counts[rho - 1]);
        }
        assert!(level_set_count(3, 2, &[1, 2], &[3]).is_err());
        assert!(level_set_count(3, 2, &[2, 1], &[1, 1]).is_err());
    }

    #[test]
    fn level_sets_partition_simplex() {
        let (n, m, t) = (5usize, 4usize, [1usize, 3]);
        let mut total = Count::zero();
        for a in 1..=n + 1 {
            for b in a..=n + 1 {
                total += level_set_count(n, m, &t, &[a, b]).unwrap();
            }
        }
        assert_eq!(total, binomial((n + m) as u64, m as u64));
    }

    #[test]
    fn box_examples() {
        assert_eq!(box_count(3, 2, &[1, 2], &[1, 1], &[2, 2]).unwrap(), c(3));
        assert_eq!(box_count(3, 2, &[1, 2], &[1, 1], &[4, 4]).unwrap(), c(10));
        assert_eq!(box_count(6, 4, &[2, 3], &[3, 4], &[3, 4]).unwrap(), level_set_count(6, 4, &[2, 3], &[3, 4]).unwrap());
        assert!(box_count(3, 2, &[1, 2], &[2, 1], &[1, 2]).is_err());
        assert!(box_count(3, 2, &[1, 2], &[1, 1], &[5, 2]).is_err());
    }

    #[test]
    fn box_matches_enumeration() {
        let (n, m) = (6usize, 5usize);
        let t = [2usize, 4];
        for (w, q) in [([1, 1], [7, 7]), ([2, 3], [5, 6]), ([3, 1], [3, 7]), ([4, 2], [6, 3])] {
            let mut brute = 0u64;
            for_each_rank_vector(n + 1, m, |r| {
                if (0..2).all(|j| w[j] <= r[t[j] - 1] && r[t[j] - 1] <= q[j]) {
                    brute += 1;
                }
            });
            assert_eq!(box_count(n, m, &t, &w, &q).unwrap(), c(brute), "w={w:?} q={q:?}");
        }
    }

    #[test]
    fn enumeration_visits_whole_simplex() {
        let mut seen = 0u64;
        let mut prev: Option<Vec<usize>> = None;
        for_each_rank_vector(4, 3, |r| {
            assert!(r.windows(2).all(|w| w[0] <= w[1]));
            if let Some(p) = &prev {
                assert!(p.as_slice() < r);
            }
            prev = Some(r.to_vec());
            seen += 1;
        });
        assert_eq!(c(seen), multiset_coeff(4, 3));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn partition_total_is_simplex_size(m in 1usize..25, n in 1usize..25) {
            let total: Count = partition_counts(m, n).into_iter().sum();
            prop_assert_eq!(total, multiset_coeff(n as u64, m as u64));
        }

        #[test]
        fn full_box_is_simplex(n in 0usize..40, m in 1usize..12, a in 0usize..12, b in 0usize..12) {
            let (t1, t2) = (a % m + 1, b % m + 1);
            let t: Vec<usize> = if t1 == t2 { vec![t1] } else { vec![t1.min(t2), t1.max(t2)] };
            let w = vec![1; t.len()];
            let q = vec![n + 1; t.len()];
            prop_assert_eq!(box_count(n, m, &t, &w, &q).unwrap(), binomial((n + m) as u64, m as u64));
        }
    }
}
