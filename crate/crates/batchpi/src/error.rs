use thiserror::Error;

/// Errors raised by the inference routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("distribution has no atoms")]
    EmptySupport,
    #[error("masses sum to {sum}, expected exactly 1")]
    MassSumNotOne { sum: String },
    #[error("negative mass {mass}")]
    NegativeMass { mass: String },
    #[error("quantile level {tau} outside the admissible range")]
    TauOutOfRange { tau: String },
    #[error("NaN encountered in {context}")]
    NaNInput { context: &'static str },
    #[error("probability {value} is not in [0, 1]")]
    InvalidProbability { value: String },
    #[error("levels do not satisfy beta + gamma = alpha (alpha={alpha}, beta={beta}, gamma={gamma})")]
    InvalidLevels {
        alpha: String,
        beta: String,
        gamma: String,
    },
    #[error("rank {zeta} outside 1..={m}")]
    ZetaOutOfRange { zeta: usize, m: usize },
    #[error("rank step is not strictly increasing or its inverse is inconsistent at accumulator {acc}, rank {rank}")]
    StepContractViolated { acc: u64, rank: u64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid box: {0}")]
    BoxInvalid(String),
    #[error("enumeration of {size} rank vectors exceeds the cap of {cap}")]
    EnumerationCapExceeded { size: String, cap: u64 },
    #[error("sampled mode needs at least 1000 draws, got {0}")]
    SampleCountTooSmall(usize),
    #[error("no rank vector satisfies the threshold {0}")]
    NoFeasibleRank(String),
    #[error("threshold {q} is below the minimum attainable value {min}")]
    QTooSmall { q: u64, min: u64 },
    #[error("batch score is not defined on integer rank vectors")]
    HNotDefinedOnIntegers,
    #[error("batch score is not monotone: {0}")]
    NotMonotone(String),
    #[error("batch score is undefined at the sentinel scores")]
    UndefinedAtSentinels,
    #[error("split of size {got} is smaller than the calibration size {need}")]
    SplitTooSmall { got: usize, need: usize },
    #[error("sparse support of size {got} exceeds the cap of {cap}")]
    SparsityCapExceeded { got: usize, cap: usize },
    #[error("eta = {eta} must lie in 0..{m}")]
    EtaOutOfRange { eta: usize, m: usize },
    #[error("prediction {0} is negative")]
    NegativePrediction(f64),
    #[error("no treated units")]
    NoTreatedUnits,
    #[error("no control units")]
    NoControlUnits,
    #[error("propensity {p} is below the declared bound {c}")]
    PropensityBelowBound { p: f64, c: f64 },
    #[error("outcome {value} lies outside [{a}, {b}]")]
    OutcomeOutOfRange { value: f64, a: f64, b: f64 },
    #[error("score {value} lies outside the declared bounds [{lower}, {upper}]")]
    ScoreOutOfBounds { value: f64, lower: f64, upper: f64 },
    #[error("training data contains a single class")]
    SingleClass,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("lower endpoint {lower} exceeds upper endpoint {upper}")]
    InvertedInterval { lower: f64, upper: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
