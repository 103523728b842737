//! Bayesian linear regression whose weight priors depend on expert-declared
//! relevance.
//!
//! ```text
//! y_i ~ N(x_i' w, sigma^2)
//! w_j ~ N(0, s0)            if r_j = 0
//! w_j ~ half-N(0, a * s0)   if r_j = 1
//! s0 = xi / (n_minus + a * n_plus)
//! a ~ 1 + half-N(0, 12.5 pi),  xi ~ Beta(1, 9),  sigma ~ half-N(0, 1)
//! ```
//!
//! `s0` is not a free parameter: it is fixed by the share `xi` of target
//! variance the linear predictor is expected to explain.

mod chain;
mod sampler;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub use chain::PosteriorChain;
pub use sampler::{sample_posterior, Pinned, SamplerConfig};

/// Variance of the half-normal part of the prior on `a`.
pub const A_PRIOR_VARIANCE: f64 = 12.5 * PI;
/// Beta(1, 9) prior on the explained-variance proportion.
pub const XI_PRIOR_BETA: f64 = 9.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceVector(Vec<bool>);

impl RelevanceVector {
    pub fn none(k: usize) -> Self {
        RelevanceVector(vec![false; k])
    }

    pub fn from_flags(flags: Vec<bool>) -> Self {
        RelevanceVector(flags)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_relevant(&self, j: usize) -> bool {
        self.0[j]
    }

    pub fn set(&mut self, j: usize) {
        self.0[j] = true;
    }

    pub fn n_plus(&self) -> usize {
        self.0.iter().filter(|&&r| r).count()
    }

    pub fn n_minus(&self) -> usize {
        self.len() - self.n_plus()
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }

    pub fn relevant_ids(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.0[j]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub w: Vec<f64>,
    pub a: f64,
    pub xi: f64,
    pub sigma: f64,
}

impl ModelParams {
    pub fn in_support(&self, r: &RelevanceVector) -> bool {
        self.a > 1.0
            && self.xi > 0.0
            && self.xi < 1.0
            && self.sigma > 0.0
            && self
                .w
                .iter()
                .zip(r.flags())
                .all(|(&w, &rel)| w.is_finite() && (!rel || w >= 0.0))
    }
}

/// Prior weight variance for non-relevant features.
pub fn sigma0_sq(xi: f64, a: f64, n_minus: usize, n_plus: usize) -> f64 {
    xi / (n_minus as f64 + a * n_plus as f64)
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn ln_normal(x: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln()) - x * x / (2.0 * var)
}

/// log density of a half-normal with scale variance `var`, for `x >= 0`.
fn ln_half_normal(x: f64, var: f64) -> f64 {
    std::f64::consts::LN_2 + ln_normal(x, var)
}

/// Log of the Beta(1, 9) density: `ln 9 + 8 ln(1 - xi)`.
fn ln_xi_prior(xi: f64) -> f64 {
    XI_PRIOR_BETA.ln() + (XI_PRIOR_BETA - 1.0) * (1.0 - xi).ln()
}

pub(crate) fn ln_a_prior(a: f64) -> f64 {
    ln_half_normal(a - 1.0, A_PRIOR_VARIANCE)
}

pub(crate) fn ln_sigma_prior(sigma: f64) -> f64 {
    ln_half_normal(sigma, 1.0)
}

/// Log prior of the weights given the hyperparameters, written in terms of
/// the squared-norm sums over non-relevant (`ss_minus`) and relevant
/// (`ss_plus`) weights. Support checks are the caller's job.
pub(crate) fn ln_weight_prior(
    ss_minus: f64,
    ss_plus: f64,
    n_minus: usize,
    n_plus: usize,
    a: f64,
    xi: f64,
) -> f64 {
    let s0 = sigma0_sq(xi, a, n_minus, n_plus);
    let v_plus = a * s0;
    -0.5 * n_minus as f64 * (LN_2PI + s0.ln()) - ss_minus / (2.0 * s0)
        + n_plus as f64 * (std::f64::consts::LN_2 - 0.5 * (LN_2PI + v_plus.ln()))
        - ss_plus / (2.0 * v_plus)
}

pub(crate) fn ln_likelihood(rss: f64, n: usize, sigma: f64) -> f64 {
    -(n as f64) * (0.5 * LN_2PI + sigma.ln()) - rss / (2.0 * sigma * sigma)
}

/// Normalized log posterior density up to the evidence: likelihood plus all
/// priors. Out-of-support parameters give `-inf`.
pub fn log_posterior(params: &ModelParams, train: &Dataset, r: &RelevanceVector) -> Result<f64> {
    let k = train.n_features();
    if params.w.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: params.w.len(),
        });
    }
    if r.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: r.len(),
        });
    }
    if ![params.a, params.xi, params.sigma].iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("non-finite hyperparameter".into()));
    }
    if !params.in_support(r) {
        return Ok(f64::NEG_INFINITY);
    }
    let rss: f64 = (0..train.n_samples())
        .map(|i| {
            let fit: f64 = train
                .row(i)
                .iter()
                .zip(&params.w)
                .map(|(&x, &w)| x as f64 * w)
                .sum();
            (train.targets()[i] - fit).powi(2)
        })
        .sum();
    let (mut ss_minus, mut ss_plus) = (0.0, 0.0);
    for (&w, &rel) in params.w.iter().zip(r.flags()) {
        if rel {
            ss_plus += w * w;
        } else {
            ss_minus += w * w;
        }
    }
    Ok(ln_likelihood(rss, train.n_samples(), params.sigma)
        + ln_weight_prior(ss_minus, ss_plus, r.n_minus(), r.n_plus(), params.a, params.xi)
        + ln_a_prior(params.a)
        + ln_xi_prior(params.xi)
        + ln_sigma_prior(params.sigma))
}

/// Posterior-mean plug-in prediction `x' E[w]`.
pub fn predict(chain: &PosteriorChain, x: &[f64]) -> Result<f64> {
    let w = chain.mean_weights();
    if x.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            actual: x.len(),
        });
    }
    Ok(x.iter().zip(&w).map(|(a, b)| a * b).sum())
}

pub fn predict_dataset(chain: &PosteriorChain, data: &Dataset) -> Result<Vec<f64>> {
    let w = chain.mean_weights();
    if data.n_features() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            actual: data.n_features(),
        });
    }
    Ok((0..data.n_samples())
        .map(|i| {
            data.row(i)
                .iter()
                .zip(&w)
                .map(|(&x, &w)| x as f64 * w)
                .sum()
        })
        .collect())
}

pub fn mean_squared_error(truth: &[f64], predicted: &[f64]) -> f64 {
    truth
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p).powi(2))
        .sum::<f64>()
        / truth.len() as f64
}

pub fn evaluate_mse(chain: &PosteriorChain, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let preds = predict_dataset(chain, test)?;
    Ok(mean_squared_error(test.targets(), &preds))
}

/// Conditional posterior mean of `w` under an all-Gaussian prior with fixed
/// variances: `(X'X + (sigma^2 / s0) I)^-1 X'y`.
pub fn ridge_oracle(train: &Dataset, sigma0_sq: f64, sigma_sq: f64) -> Result<Vec<f64>> {
    if !(sigma0_sq > 0.0 && sigma_sq > 0.0) {
        return Err(Error::InvalidParameter("variances must be positive".into()));
    }
    let (n, k) = (train.n_samples(), train.n_features());
    let x = DMatrix::from_fn(n, k, |i, j| train.get(i, j) as f64);
    let y = DVector::from_column_slice(train.targets());
    let gram = x.transpose() * &x + DMatrix::identity(k, k) * (sigma_sq / sigma0_sq);
    let rhs = x.transpose() * y;
    gram.lu()
        .solve(&rhs)
        .map(|w| w.iter().copied().collect())
        .ok_or_else(|| Error::Numerical("singular ridge system".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        // 2 samples, 1 feature.
        Dataset::new(
            vec!["a".into(), "b".into()],
            vec!["f".into()],
            vec![1, 0],
            vec![0.7, -0.2],
            vec!["c".into(), "c".into()],
        )
        .unwrap()
    }

    #[test]
    fn sigma0_hand_values() {
        assert_eq!(sigma0_sq(1.0, 1.0, 1, 0), 1.0);
        assert!((sigma0_sq(0.1, 6.0, 450, 7) - 0.1 / 492.0).abs() < 1e-15);
        assert!((sigma0_sq(0.1, 6.0, 450, 7) - 2.0325e-4).abs() < 1e-8);
        assert!((sigma0_sq(0.1, 6.0, 457, 0) - 2.1882e-4).abs() < 1e-8);
    }

    #[test]
    fn log_posterior_support() {
        let ds = tiny();
        let mut r = RelevanceVector::none(1);
        r.set(0);
        let mut p = ModelParams { w: vec![-0.1], a: 2.0, xi: 0.2, sigma: 1.0 };
        assert_eq!(log_posterior(&p, &ds, &r).unwrap(), f64::NEG_INFINITY);
        p.w[0] = 0.1;
        assert!(log_posterior(&p, &ds, &r).unwrap().is_finite());
        p.a = 1.0;
        assert_eq!(log_posterior(&p, &ds, &r).unwrap(), f64::NEG_INFINITY);
        p.a = 2.0;
        p.xi = 1.0;
        assert_eq!(log_posterior(&p, &ds, &r).unwrap(), f64::NEG_INFINITY);
        p.xi = 0.5;
        p.sigma = 0.0;
        assert_eq!(log_posterior(&p, &ds, &r).unwrap(), f64::NEG_INFINITY);
        p.w.push(0.0);
        assert!(log_posterior(&p, &ds, &r).is_err());
    }

    #[test]
    fn density_ratio_matches_hand_computation() {
        // Each factor written out directly for the 2-sample, 1-feature case.
        fn direct(w: f64, a: f64, xi: f64, sigma: f64, relevant: bool) -> f64 {
            let npdf = |x: f64, var: f64| (-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
            let lik = npdf(0.7 - w, sigma * sigma) * npdf(-0.2, sigma * sigma);
            let s0 = if relevant { xi / a } else { xi };
            let pw = if relevant { 2.0 * npdf(w, a * s0) } else { npdf(w, s0) };
            let pa = 2.0 * npdf(a - 1.0, 12.5 * PI);
            let pxi = 9.0 * (1.0 - xi).powi(8);
            let ps = 2.0 * npdf(sigma, 1.0);
            lik * pw * pa * pxi * ps
        }
        let ds = tiny();
        for relevant in [false, true] {
            let r = RelevanceVector::from_flags(vec![relevant]);
            let p1 = ModelParams { w: vec![0.3], a: 3.0, xi: 0.2, sigma: 0.8 };
            let p2 = ModelParams { w: vec![0.05], a: 7.5, xi: 0.05, sigma: 1.3 };
            let lhs = log_posterior(&p1, &ds, &r).unwrap() - log_posterior(&p2, &ds, &r).unwrap();
            let rhs = (direct(0.3, 3.0, 0.2, 0.8, relevant) / direct(0.05, 7.5, 0.05, 1.3, relevant)).ln();
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn ridge_oracle_hand_values() {
        let ds = Dataset::new(
            vec!["a".into(), "b".into()],
            vec!["f".into(), "g".into()],
            vec![1, 0, 0, 1],
            vec![1.0, 2.0],
            vec!["c".into(), "c".into()],
        )
        .unwrap();
        let w = ridge_oracle(&ds, 1.0, 1.0).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 1.0).abs() < 1e-12);
        // Vanishing regularizer recovers least squares on full-rank X.
        let w = ridge_oracle(&ds, 1e12, 1.0).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-9 && (w[1] - 2.0).abs() < 1e-9);
        let zero = Dataset::new(
            vec!["a".into()], vec!["f".into()], vec![1], vec![0.0], vec!["c".into()],
        )
        .unwrap();
        assert_eq!(ridge_oracle(&zero, 1.0, 1.0).unwrap(), vec![0.0]);
        assert!(ridge_oracle(&zero, 0.0, 1.0).is_err());
    }

    #[test]
    fn mse_hand_value() {
        assert_eq!(mean_squared_error(&[1.0, -1.0], &[0.0, 0.0]), 1.0);
        assert_eq!(mean_squared_error(&[0.3, 2.0], &[0.3, 2.0]), 0.0);
    }
}
