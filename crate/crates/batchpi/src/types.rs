//! Value types shared by every inference routine: extended-real scores,
//! exact probabilities, miscoverage levels and sorted calibration scores.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A score on the extended real line. NaN is unrepresentable, so the type is
/// totally ordered with `NEG_INF < finite < POS_INF`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtendedScore(f64);

impl ExtendedScore {
    pub const NEG_INF: ExtendedScore = ExtendedScore(f64::NEG_INFINITY);
    pub const POS_INF: ExtendedScore = ExtendedScore(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() {
            return Err(Error::NaNInput { context: "extended score" });
        }
        // -0.0 and 0.0 must compare equal under the total order.
        Ok(ExtendedScore(if value == 0.0 { 0.0 } else { value }))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl Eq for ExtendedScore {}

impl PartialOrd for ExtendedScore {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtendedScore {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for ExtendedScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == f64::INFINITY {
            write!(f, "+inf")
        } else if self.0 == f64::NEG_INFINITY {
            write!(f, "-inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for ExtendedScore {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            serializer.serialize_f64(self.0)
        } else {
            serializer.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for ExtendedScore {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        let v = match Repr::deserialize(deserializer)? {
            Repr::Num(x) => x,
            Repr::Text(s) => match s.as_str() {
                "+inf" | "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                other => return Err(serde::de::Error::custom(format!("bad score {other:?}"))),
            },
        };
        ExtendedScore::new(v).map_err(serde::de::Error::custom)
    }
}

/// An exact probability in [0, 1].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Probability(BigRational);

impl Probability {
    pub fn zero() -> Self {
        Probability(BigRational::zero())
    }

    pub fn one() -> Self {
        Probability(BigRational::one())
    }

    pub fn from_rational(r: BigRational) -> Result<Self> {
        if r.is_negative() || r > BigRational::one() {
            return Err(Error::InvalidProbability { value: r.to_string() });
        }
        Ok(Probability(r))
    }

    pub fn from_ratio(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidProbability { value: format!("{num}/0") });
        }
        Self::from_rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    /// Converts through the shortest decimal representation, so `0.1` becomes
    /// exactly 1/10 rather than the nearest binary fraction.
    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::InvalidProbability { value: x.to_string() });
        }
        format!("{x}").parse()
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn complement(&self) -> Self {
        Probability(BigRational::one() - &self.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn half(&self) -> Self {
        Probability(&self.0 / BigRational::from_integer(BigInt::from(2)))
    }

    /// `self / k`, used for Bonferroni-style splits.
    pub fn div_int(&self, k: u64) -> Self {
        Probability(&self.0 / BigRational::from_integer(BigInt::from(k)))
    }
}

fn parse_decimal(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if s.contains('/') {
        let (a, b) = s.split_once('/')?;
        let a: BigInt = a.trim().parse().ok()?;
        let b: BigInt = b.trim().parse().ok()?;
        if b.is_zero() {
            return None;
        }
        return Some(BigRational::new(a, b));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (negative, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("0{int_part}{frac_part}").parse().ok()?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        BigRational::from_integer(digits * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(digits, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        value = -value;
    }
    Some(value)
}

impl FromStr for Probability {
    type Err = Error;

    /// Accepts decimals (`0.05`), scientific notation (`5e-2`) and ratios (`1/20`).
    fn from_str(s: &str) -> Result<Self> {
        let r = parse_decimal(s).ok_or_else(|| Error::InvalidProbability { value: s.to_string() })?;
        Probability::from_rational(r)
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

impl Serialize for Probability {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.to_f64())
    }
}

impl<'de> Deserialize<'de> for Probability {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(x) => Probability::from_f64(x),
            Repr::Text(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// Miscoverage split: `beta` is spent on the lower endpoint, `gamma` on the
/// upper one, and `beta + gamma = alpha` holds exactly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Levels {
    alpha: Probability,
    beta: Probability,
    gamma: Probability,
}

impl Levels {
    pub fn new(alpha: Probability, beta: Probability, gamma: Probability) -> Result<Self> {
        if &beta.0 + &gamma.0 != alpha.0 {
            return Err(Error::InvalidLevels {
                alpha: alpha.0.to_string(),
                beta: beta.0.to_string(),
                gamma: gamma.0.to_string(),
            });
        }
        Ok(Levels { alpha, beta, gamma })
    }

    /// Equal split between the two tails.
    pub fn two_sided(alpha: Probability) -> Self {
        let half = alpha.half();
        Levels { alpha, beta: half.clone(), gamma: half }
    }

    /// All miscoverage on the upper endpoint; the lower endpoint is the
    /// infimum of the score range.
    pub fn upper(alpha: Probability) -> Self {
        Levels { gamma: alpha.clone(), alpha, beta: Probability::zero() }
    }

    /// All miscoverage on the lower endpoint.
    pub fn lower(alpha: Probability) -> Self {
        Levels { beta: alpha.clone(), alpha, gamma: Probability::zero() }
    }

    /// Convenience constructor from decimal strings.
    pub fn parse(alpha: &str, beta: &str, gamma: &str) -> Result<Self> {
        Levels::new(alpha.parse()?, beta.parse()?, gamma.parse()?)
    }

    pub fn alpha(&self) -> &Probability {
        &self.alpha
    }

    pub fn beta(&self) -> &Probability {
        &self.beta
    }

    pub fn gamma(&self) -> &Probability {
        &self.gamma
    }
}

/// Range of the score function: `S_(0)` and `S_(n+1)` resolve to these.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreBounds {
    pub lower: f64,
    pub upper: f64,
}

impl Default for ScoreBounds {
    fn default() -> Self {
        ScoreBounds { lower: f64::NEG_INFINITY, upper: f64::INFINITY }
    }
}

impl ScoreBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() {
            return Err(Error::NaNInput { context: "score bounds" });
        }
        if lower > upper {
            return Err(Error::Config(format!("score bounds [{lower}, {upper}] are inverted")));
        }
        Ok(ScoreBounds { lower, upper })
    }
}

/// Calibration scores together with their order statistics.
///
/// Index 0 resolves to the lower score bound and index `n + 1` to the upper
/// one; both default to the infinities.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationScores {
    raw: Vec<f64>,
    sorted: Vec<f64>,
    bounds: ScoreBounds,
}

/// Sorts raw scores with unbounded sentinels.
pub fn order_statistics(raw: &[f64]) -> Result<CalibrationScores> {
    CalibrationScores::with_bounds(raw, ScoreBounds::default())
}

impl CalibrationScores {
    pub fn new(raw: &[f64]) -> Result<Self> {
        order_statistics(raw)
    }

    pub fn with_bounds(raw: &[f64], bounds: ScoreBounds) -> Result<Self> {
        for &x in raw {
            if x.is_nan() {
                return Err(Error::NaNInput { context: "calibration scores" });
            }
            if x < bounds.lower || x > bounds.upper {
                return Err(Error::ScoreOutOfBounds { value: x, lower: bounds.lower, upper: bounds.upper });
            }
        }
        let mut sorted = raw.to_vec();
        sorted.sort_by(f64::total_cmp);
        for v in sorted.iter_mut() {
            if *v == 0.0 {
                *v = 0.0;
            }
        }
        Ok(CalibrationScores { raw: raw.to_vec(), sorted, bounds })
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn bounds(&self) -> ScoreBounds {
        self.bounds
    }

    /// `S_(r)` for `0 <= r <= n + 1`.
    pub fn order_stat(&self, r: usize) -> f64 {
        if r == 0 {
            self.bounds.lower
        } else if r > self.sorted.len() {
            debug_assert_eq!(r, self.sorted.len() + 1);
            self.bounds.upper
        } else {
            self.sorted[r - 1]
        }
    }

    pub fn get(&self, r: usize) -> ExtendedScore {
        ExtendedScore(self.order_stat(r))
    }

    /// The scores whose mask entry is true, keeping the bounds.
    pub fn subset(&self, mask: &[bool]) -> Result<CalibrationScores> {
        if mask.len() != self.raw.len() {
            return Err(Error::ShapeMismatch(format!(
                "mask of length {} for {} scores",
                mask.len(),
                self.raw.len()
            )));
        }
        let kept: Vec<f64> = self.raw.iter().zip(mask).filter(|(_, &k)| k).map(|(&x, _)| x).collect();
        CalibrationScores::with_bounds(&kept, self.bounds)
    }
}
