//! Finite distributions with exact masses and the two quantile functions.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::types::Probability;

/// A distribution on finitely many extended reals.
///
/// Masses are stored as integer weights over a common denominator, which
/// keeps cumulative comparisons exact and cheap.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDist {
    values: Vec<f64>,
    weights: Vec<BigUint>,
    total: BigUint,
}

fn normalize_zero(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// Builds a distribution from `(value, mass)` pairs. Equal values are merged
/// and the masses must add up to exactly one.
pub fn make_discrete_dist(pairs: &[(f64, BigRational)]) -> Result<DiscreteDist> {
    if pairs.is_empty() {
        return Err(Error::EmptySupport);
    }
    let mut denom = BigInt::one();
    for (v, mass) in pairs {
        if v.is_nan() {
            return Err(Error::NaNInput { context: "distribution support" });
        }
        if mass.is_negative() {
            return Err(Error::NegativeMass { mass: mass.to_string() });
        }
        denom = denom.lcm(mass.denom());
    }
    let mut counts = Vec::with_capacity(pairs.len());
    let mut sum = BigInt::zero();
    for (v, mass) in pairs {
        let w = mass.numer() * (&denom / mass.denom());
        sum += &w;
        counts.push((*v, w.to_biguint().expect("nonnegative")));
    }
    if sum != denom {
        return Err(Error::MassSumNotOne { sum: BigRational::new(sum, denom).to_string() });
    }
    DiscreteDist::from_counts(counts)
}

impl DiscreteDist {
    /// Builds a distribution proportional to nonnegative integer counts.
    pub fn from_counts<I>(counts: I) -> Result<DiscreteDist>
    where
        I: IntoIterator<Item = (f64, BigUint)>,
    {
        let mut atoms: Vec<(f64, BigUint)> = Vec::new();
        for (v, c) in counts {
            if v.is_nan() {
                return Err(Error::NaNInput { context: "distribution support" });
            }
            if !c.is_zero() {
                atoms.push((normalize_zero(v), c));
            }
        }
        if atoms.is_empty() {
            return Err(Error::EmptySupport);
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut weights: Vec<BigUint> = Vec::with_capacity(atoms.len());
        let mut total = BigUint::zero();
        for (v, c) in atoms {
            total += &c;
            match values.last() {
                Some(&last) if last == v => *weights.last_mut().unwrap() += c,
                _ => {
                    values.push(v);
                    weights.push(c);
                }
            }
        }
        Ok(DiscreteDist { values, weights, total })
    }

    /// Uniform distribution on the given values (duplicates add mass).
    pub fn uniform(values: &[f64]) -> Result<DiscreteDist> {
        DiscreteDist::from_counts(values.iter().map(|&v| (v, BigUint::one())))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Support points in increasing order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self, i: usize) -> BigRational {
        BigRational::new(BigInt::from(self.weights[i].clone()), BigInt::from(self.total.clone()))
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, BigRational)> + '_ {
        (0..self.len()).map(move |i| (self.values[i], self.mass(i)))
    }

    pub fn max_mass(&self) -> BigRational {
        let w = self.weights.iter().max().expect("nonempty").clone();
        BigRational::new(BigInt::from(w), BigInt::from(self.total.clone()))
    }

    /// Exact `P(X <= v)`.
    pub fn cdf(&self, v: f64) -> BigRational {
        let mut acc = BigUint::zero();
        for (x, w) in self.values.iter().zip(&self.weights) {
            if *x > v {
                break;
            }
            acc += w;
        }
        BigRational::new(BigInt::from(acc), BigInt::from(self.total.clone()))
    }

    /// Distribution of `-X`.
    pub fn mirror(&self) -> DiscreteDist {
        DiscreteDist {
            values: self.values.iter().rev().map(|v| normalize_zero(-v)).collect(),
            weights: self.weights.iter().rev().cloned().collect(),
            total: self.total.clone(),
        }
    }
}

fn split(tau: &Probability) -> (BigUint, BigUint) {
    let r = tau.as_rational();
    (
        r.numer().to_biguint().expect("probability is nonnegative"),
        r.denom().to_biguint().expect("denominator is positive"),
    )
}

/// `Q_tau(P)`: the smallest support value whose cumulative mass reaches `tau`.
pub fn quantile_lower(dist: &DiscreteDist, tau: &Probability) -> Result<f64> {
    if tau.is_zero() {
        return Err(Error::TauOutOfRange { tau: tau.to_string() });
    }
    let (num, den) = split(tau);
    let target = &num * &dist.total;
    let mut acc = BigUint::zero();
    for (v, w) in dist.values.iter().zip(&dist.weights) {
        acc += w;
        if &acc * &den >= target {
            return Ok(*v);
        }
    }
    unreachable!("cumulative mass reaches one")
}

/// `Q'_tau(P)`: the largest support value whose upper-tail mass `P(X >= v)`
/// is at least `1 - tau`.
pub fn quantile_upper_tail(dist: &DiscreteDist, tau: &Probability) -> Result<f64> {
    if tau.is_one() {
        return Err(Error::TauOutOfRange { tau: tau.to_string() });
    }
    let (num, den) = split(tau);
    let target = (&den - &num) * &dist.total;
    let mut acc = BigUint::zero();
    for (v, w) in dist.values.iter().zip(&dist.weights).rev() {
        acc += w;
        if &acc * &den >= target {
            return Ok(*v);
        }
    }
    unreachable!("tail mass reaches one")
}
