//! Synthetic data for the three simulation designs.
//!
//! Each generator splits into a parameter draw (done once per experiment)
//! and a data draw, taken from separate substreams.

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal, StandardNormal};
use serde::Serialize;

use super::seeds::{substream_rng, Stream};

/// Features and one outcome per row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

fn unif_vec<R: Rng>(rng: &mut R, p: usize) -> Vec<f64> {
    (0..p).map(|_| rng.random::<f64>()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else {
        t.exp().ln_1p()
    }
}

/// Gaussian features `N_p(mu_x, 5 I)`.
fn gaussian_features<R: Rng>(rng: &mut R, mu_x: &[f64]) -> Vec<f64> {
    let sd = 5f64.sqrt();
    mu_x.iter().map(|&mu| mu + sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `Y | X ~ N(b1'X + (b2'X)^2, |b3'X|^2)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegressionParams {
    pub mu_x: Vec<f64>,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub beta3: Vec<f64>,
}

impl RegressionParams {
    pub fn draw(p: usize, seed: u64) -> Self {
        let mut rng = substream_rng(seed, Stream::Params, 0);
        RegressionParams {
            mu_x: unif_vec(&mut rng, p),
            beta1: unif_vec(&mut rng, p),
            beta2: unif_vec(&mut rng, p),
            beta3: unif_vec(&mut rng, p),
        }
    }

    /// Zeroes `beta3`, which makes the outcome a deterministic function of X.
    pub fn degenerate(mut self) -> Self {
        self.beta3.iter_mut().for_each(|b| *b = 0.0);
        self
    }

    pub fn sample<R: Rng>(&self, size: usize, rng: &mut R) -> Dataset {
        let mut x = Vec::with_capacity(size);
        let mut y = Vec::with_capacity(size);
        for _ in 0..size {
            let xi = gaussian_features(rng, &self.mu_x);
            let mean = dot(&self.beta1, &xi) + dot(&self.beta2, &xi).powi(2);
            let sd = dot(&self.beta3, &xi).abs();
            y.push(mean + sd * rng.sample::<f64, _>(StandardNormal));
            x.push(xi);
        }
        Dataset { x, y }
    }
}

/// Parameters from the `Params` substream, data from the first `Trial`
/// substream.
pub fn gen_regression_data(p: usize, size: usize, seed: u64) -> Dataset {
    RegressionParams::draw(p, seed).sample(size, &mut substream_rng(seed, Stream::Trial, 0))
}

/// `Y = log(1 + exp(b'X + sigma Z))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SoftplusParams {
    pub mu_x: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma: f64,
}

impl SoftplusParams {
    pub fn draw(p: usize, sigma: f64, seed: u64) -> Self {
        let mut rng = substream_rng(seed, Stream::Params, 0);
        SoftplusParams { mu_x: unif_vec(&mut rng, p), beta: unif_vec(&mut rng, p), sigma }
    }

    pub fn sample<R: Rng>(&self, size: usize, rng: &mut R) -> Dataset {
        let noise = Normal::new(0.0, self.sigma).expect("sigma is finite and nonnegative");
        let mut x = Vec::with_capacity(size);
        let mut y = Vec::with_capacity(size);
        for _ in 0..size {
            let xi = gaussian_features(rng, &self.mu_x);
            y.push(softplus(dot(&self.beta, &xi) + noise.sample(rng)));
            x.push(xi);
        }
        Dataset { x, y }
    }
}

pub fn gen_softplus_data(p: usize, size: usize, sigma: f64, seed: u64) -> Dataset {
    SoftplusParams::draw(p, sigma, seed).sample(size, &mut substream_rng(seed, Stream::Trial, 0))
}

/// One unit with both potential outcomes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterfactualUnit {
    pub x: Vec<f64>,
    pub treated: bool,
    pub y0: f64,
    pub y1: f64,
}

impl CounterfactualUnit {
    pub fn observed(&self) -> f64 {
        if self.treated {
            self.y1
        } else {
            self.y0
        }
    }
}

/// Uniform features on `[0,1]^p`, `logit P(A=1|x) = b_A'x`, and
/// `Y^0 ~ Beta(1 + x'b_Y, 1 - x'b_Y)`, `Y^1 ~ Beta(1 - x'b_Y, 1 + x'b_Y)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterfactualParams {
    pub beta_a: Vec<f64>,
    pub beta_y: Vec<f64>,
}

/// Cap on `max_x x'b_Y` over the unit cube.
pub const BETA_Y_MAX: f64 = 0.99;

impl CounterfactualParams {
    /// `b_Y` is rescaled so that `x'b_Y <= 0.99` on the cube, keeping both
    /// Beta parameters positive.
    pub fn draw(p: usize, seed: u64) -> Self {
        let mut rng = substream_rng(seed, Stream::Params, 0);
        let beta_a = unif_vec(&mut rng, p);
        let mut beta_y = unif_vec(&mut rng, p);
        let total: f64 = beta_y.iter().sum();
        if total > BETA_Y_MAX {
            beta_y.iter_mut().for_each(|b| *b *= BETA_Y_MAX / total);
        }
        CounterfactualParams { beta_a, beta_y }
    }

    pub fn treatment_probability(&self, x: &[f64]) -> f64 {
        sigmoid(dot(&self.beta_a, x))
    }

    /// `P(A = 0 | x)`.
    pub fn control_probability(&self, x: &[f64]) -> f64 {
        sigmoid(-dot(&self.beta_a, x))
    }

    /// Smallest control probability over the cube, attained at `x = 1`.
    pub fn control_lower_bound(&self) -> f64 {
        sigmoid(-self.beta_a.iter().sum::<f64>())
    }

    pub fn unit<R: Rng>(&self, rng: &mut R) -> CounterfactualUnit {
        let x = unif_vec(rng, self.beta_a.len());
        let treated = rng.random::<f64>() < self.treatment_probability(&x);
        let t = dot(&self.beta_y, &x);
        let y0 = Beta::new(1.0 + t, 1.0 - t).expect("positive shapes").sample(rng);
        let y1 = Beta::new(1.0 - t, 1.0 + t).expect("positive shapes").sample(rng);
        CounterfactualUnit { x, treated, y0, y1 }
    }

    pub fn sample<R: Rng>(&self, size: usize, rng: &mut R) -> Vec<CounterfactualUnit> {
        (0..size).map(|_| self.unit(rng)).collect()
    }

    /// Draws units until `n_control` controls and `m_treated` treated units
    /// are collected, discarding the overflow of either arm. This conditions
    /// on the arm sizes. Returns `None` after `max_draws` draws.
    pub fn sample_arms<R: Rng>(
        &self,
        n_control: usize,
        m_treated: usize,
        max_draws: usize,
        rng: &mut R,
    ) -> Option<(Vec<CounterfactualUnit>, Vec<CounterfactualUnit>)> {
        let mut controls = Vec::with_capacity(n_control);
        let mut treated = Vec::with_capacity(m_treated);
        for _ in 0..max_draws {
            if controls.len() == n_control && treated.len() == m_treated {
                break;
            }
            let u = self.unit(rng);
            if u.treated {
                if treated.len() < m_treated {
                    treated.push(u);
                }
            } else if controls.len() < n_control {
                controls.push(u);
            }
        }
        (controls.len() == n_control && treated.len() == m_treated).then_some((controls, treated))
    }
}

pub fn gen_counterfactual_data(p: usize, size: usize, seed: u64) -> Vec<CounterfactualUnit> {
    CounterfactualParams::draw(p, seed).sample(size, &mut substream_rng(seed, Stream::Trial, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_seed_sensitive() {
        assert_eq!(gen_regression_data(20, 50, 1), gen_regression_data(20, 50, 1));
        assert_ne!(gen_regression_data(20, 50, 1), gen_regression_data(20, 50, 2));
        assert_eq!(gen_softplus_data(5, 10, 3.0, 4), gen_softplus_data(5, 10, 3.0, 4));
        assert_eq!(gen_counterfactual_data(5, 10, 4), gen_counterfactual_data(5, 10, 4));
    }

    #[test]
    fn degenerate_regression_is_noise_free() {
        let params = RegressionParams::draw(4, 9).degenerate();
        let d = params.sample(30, &mut substream_rng(9, Stream::Trial, 0));
        for (x, y) in d.x.iter().zip(&d.y) {
            let mean = dot(&params.beta1, x) + dot(&params.beta2, x).powi(2);
            assert_eq!(*y, mean);
        }
    }

    #[test]
    fn softplus_outcomes_positive() {
        let d = gen_softplus_data(20, 500, 3.0, 11);
        assert!(d.y.iter().all(|&y| y > 0.0));
        let labels: Vec<bool> = d.y.iter().map(|&y| y > 5.0).collect();
        let again: Vec<bool> = gen_softplus_data(20, 500, 3.0, 11).y.iter().map(|&y| y > 5.0).collect();
        assert_eq!(labels, again);
    }

    #[test]
    fn counterfactual_shapes() {
        let params = CounterfactualParams::draw(20, 5);
        assert!(params.beta_y.iter().sum::<f64>() <= BETA_Y_MAX + 1e-12);
        let units = params.sample(2000, &mut substream_rng(5, Stream::Trial, 0));
        let frac = units.iter().filter(|u| u.treated).count() as f64 / units.len() as f64;
        assert!(frac > 0.0 && frac < 1.0);
        for u in &units {
            assert!((0.0..=1.0).contains(&u.y0) && (0.0..=1.0).contains(&u.y1));
            assert!(params.control_probability(&u.x) >= params.control_lower_bound());
        }
    }

    #[test]
    fn arm_sizes_match_request() {
        let params = CounterfactualParams::draw(5, 2);
        let (c, t) = params.sample_arms(200, 40, 1_000_000, &mut substream_rng(2, Stream::Trial, 0)).unwrap();
        assert_eq!((c.len(), t.len()), (200, 40));
        assert!(c.iter().all(|u| !u.treated) && t.iter().all(|u| u.treated));
        assert!(params.sample_arms(200, 40, 10, &mut substream_rng(2, Stream::Trial, 0)).is_none());
    }
}
