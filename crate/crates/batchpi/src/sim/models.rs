//! Score models fitted on a training split.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::data::{sigmoid, Dataset};
use crate::covshift::PropensityModel;
use crate::error::{Error, Result};

/// Ridge penalty used when the normal equations are singular.
pub const RIDGE_FALLBACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RegressorKind {
    Linear,
    Knn { k: usize },
}

/// Fitted mean predictor.
#[derive(Clone, Debug, PartialEq)]
pub enum Regressor {
    /// Intercept followed by slopes.
    Linear { coef: Vec<f64> },
    Knn { k: usize, x: Vec<Vec<f64>>, y: Vec<f64> },
}

fn design(x: &[Vec<f64>]) -> DMatrix<f64> {
    let p = x.first().map_or(0, Vec::len);
    DMatrix::from_fn(x.len(), p + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] })
}

/// Solves `(X'X + lambda I) b = X'y`, adding the fallback penalty when the
/// unpenalized system has no Cholesky factor.
fn least_squares(xm: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let xt = xm.transpose();
    let rhs = &xt * y;
    let gram = &xt * xm;
    let k = gram.nrows();
    let penalized = |l: f64| (&gram + DMatrix::identity(k, k) * l).cholesky();
    match penalized(lambda).or_else(|| penalized(lambda.max(RIDGE_FALLBACK))) {
        Some(ch) => ch.solve(&rhs),
        None => DVector::zeros(k),
    }
}

pub fn fit_simple_regressor(train: &Dataset, kind: RegressorKind) -> Result<Regressor> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    match kind {
        RegressorKind::Linear => {
            let xm = design(&train.x);
            let coef = least_squares(&xm, &DVector::from_column_slice(&train.y), 0.0);
            Ok(Regressor::Linear { coef: coef.iter().copied().collect() })
        }
        RegressorKind::Knn { k } => {
            if k == 0 {
                return Err(Error::Config("knn needs k >= 1".into()));
            }
            Ok(Regressor::Knn { k: k.min(train.len()), x: train.x.clone(), y: train.y.clone() })
        }
    }
}

impl Regressor {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Regressor::Linear { coef } => coef[0] + coef[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>(),
            Regressor::Knn { k, x: tx, y } => {
                let mut d: Vec<(f64, usize)> = tx
                    .iter()
                    .enumerate()
                    .map(|(i, t)| (t.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum(), i))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d[..*k].iter().map(|&(_, i)| y[i]).sum::<f64>() / *k as f64
            }
        }
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|xi| self.predict(xi)).collect()
    }
}

/// Logistic regression coefficients (intercept first).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
}

impl LogisticFit {
    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.coef[0] + self.coef[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
    }
}

const IRLS_ITERS: usize = 100;
const IRLS_RIDGE: f64 = 1e-4;

/// Penalized IRLS for `P(label | x)`.
pub fn fit_logistic(x: &[Vec<f64>], labels: &[bool]) -> Result<LogisticFit> {
    if x.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if x.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} rows, {} labels", x.len(), labels.len())));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::SingleClass);
    }
    let xm = design(x);
    let y = DVector::from_iterator(labels.len(), labels.iter().map(|&l| f64::from(u8::from(l))));
    let mut beta = DVector::zeros(xm.ncols());
    for _ in 0..IRLS_ITERS {
        let eta = &xm * &beta;
        let mu = eta.map(sigmoid);
        let w = mu.map(|p| (p * (1.0 - p)).max(1e-10));
        // working response z = eta + (y - mu) / w
        let z = DVector::from_iterator(eta.len(), (0..eta.len()).map(|i| eta[i] + (y[i] - mu[i]) / w[i]));
        let xw = DMatrix::from_fn(xm.nrows(), xm.ncols(), |i, j| xm[(i, j)] * w[i]);
        let gram = xw.transpose() * &xm + DMatrix::identity(xm.ncols(), xm.ncols()) * IRLS_RIDGE;
        let Some(ch) = gram.cholesky() else { break };
        let next = ch.solve(&(xw.transpose() * z));
        let moved = (&next - &beta).amax();
        beta = next;
        if moved < 1e-10 {
            break;
        }
    }
    Ok(LogisticFit { coef: beta.iter().copied().collect() })
}

/// Logistic fit of `P(label | x)` wrapped as a propensity model whose
/// probabilities are clipped to `[c_clip, 1]`; `c_clip` is the declared
/// lower bound.
pub fn fit_logistic_propensity(x: &[Vec<f64>], labels: &[bool], c_clip: f64) -> Result<PropensityModel> {
    let fit = fit_logistic(x, labels)?;
    PropensityModel::new(c_clip, move |v| fit.probability(v).clamp(c_clip, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(x: Vec<Vec<f64>>, y: Vec<f64>) -> Dataset {
        Dataset { x, y }
    }

    #[test]
    fn constant_outcome_gives_constant_predictor() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i) as f64 % 7.0]).collect();
        let f = fit_simple_regressor(&ds(x, vec![3.5; 20]), RegressorKind::Linear).unwrap();
        for v in [[0.0, 0.0], [100.0, -3.0]] {
            assert!((f.predict(&v) - 3.5).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_recovers_exact_line() {
        let x: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64 / 3.0]).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v[0]).collect();
        let f = fit_simple_regressor(&ds(x.clone(), y.clone()), RegressorKind::Linear).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((f.predict(xi) - yi).abs() < 1e-9);
        }
    }

    #[test]
    fn collinear_design_falls_back_to_ridge() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let f = fit_simple_regressor(&ds(x.clone(), y.clone()), RegressorKind::Linear).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((f.predict(xi) - yi).abs() < 1e-3);
        }
    }

    #[test]
    fn one_nearest_neighbour_memorizes() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, -(i as f64)]).collect();
        let y: Vec<f64> = (0..10).map(|i| (i * 3 % 5) as f64).collect();
        let f = fit_simple_regressor(&ds(x.clone(), y.clone()), RegressorKind::Knn { k: 1 }).unwrap();
        assert_eq!(f.predict_all(&x), y);
        assert_eq!(fit_simple_regressor(&ds(vec![], vec![]), RegressorKind::Linear), Err(Error::EmptyTrainingSet));
    }

    #[test]
    fn balanced_logistic_has_zero_intercept() {
        let mut x = Vec::new();
        let mut l = Vec::new();
        for i in 0..50 {
            let v = (i as f64 - 24.5) / 10.0;
            x.push(vec![v]);
            l.push((i * 7) % 3 == 0);
            x.push(vec![-v]);
            l.push((i * 7) % 3 != 0);
        }
        let fit = fit_logistic(&x, &l).unwrap();
        assert!(fit.coef[0].abs() < 1e-6);
    }

    #[test]
    fn separable_data_is_clipped() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let l: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let model = fit_logistic_propensity(&x, &l, 0.05).unwrap();
        for v in -5..30 {
            let p = model.eval(&[v as f64]).unwrap();
            assert!((0.05..=1.0).contains(&p));
        }
        assert!((model.eval(&[0.0]).unwrap() - 0.05).abs() < 1e-12);
        assert!(matches!(fit_logistic(&x, &[true; 20]), Err(Error::SingleClass)));
    }
}
