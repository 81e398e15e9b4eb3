//! Distribution-free prediction intervals for monotone functions of a batch
//! of unobserved test scores.
//!
//! Given `n` exchangeable calibration scores and `m` test points, the
//! procedures here bound quantities such as the mean, a quantile, or several
//! quantiles of the test scores simultaneously, with finite-sample coverage.

pub mod applications;
pub mod baselines;
pub mod combinatorics;
pub mod covshift;
pub mod dist;
pub mod engine;
pub mod quantile;
pub mod sim;
pub mod error;
pub mod types;

pub use error::{Error, Result};
pub use types::{order_statistics, CalibrationScores, ExtendedScore, Levels, Probability, ScoreBounds};
