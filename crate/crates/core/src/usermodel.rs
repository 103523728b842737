//! Bandit model of the expert's relevance judgments.
//!
//! Relevance of feature j is modelled linearly in its descriptor,
//! `r_hat_j = Z_j v + b`, with `v` fitted by ridge regression on the answers
//! so far plus a weak pseudo-answer for every feature. Features are queried
//! by upper confidence bound `r_hat_j + c_j`, where the width
//! `c_j = rho_t * sqrt(Z_j' G^-1 Z_j)` uses the same Gram matrix
//! `G = Z_t'Z_t + beta Z'Z + lambda I` as the fit.

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::descriptors::DescriptorMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserModelParams {
    /// Default relevance.
    pub b: f64,
    pub lambda: f64,
    /// Exploration weight.
    pub alpha: f64,
    /// Failure probability of the confidence bound.
    pub delta: f64,
    /// Strength of the pseudo-input.
    pub beta: f64,
}

impl Default for UserModelParams {
    fn default() -> Self {
        UserModelParams {
            b: 0.5,
            lambda: 1e-3,
            alpha: 0.5,
            delta: 0.05,
            beta: 0.01,
        }
    }
}

impl UserModelParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.b > 0.0
            && self.b < 1.0
            && self.lambda > 0.0
            && self.alpha >= 0.0
            && self.delta > 0.0
            && self.delta < 1.0
            && self.beta >= 0.0
            && [self.b, self.lambda, self.alpha, self.delta, self.beta]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "user model parameters out of range: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub feature: usize,
    pub relevant: bool,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceEstimate {
    pub v_hat: Vec<f64>,
    pub r_hat: Vec<f64>,
    pub r_hat_unit: Vec<f64>,
    pub widths: Vec<f64>,
    pub ucb: Vec<f64>,
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Confidence multiplier `sqrt(alpha * ln(2 t K / delta))`.
pub fn exploration_radius(alpha: f64, t: usize, k: usize, delta: f64) -> f64 {
    (alpha * (2.0 * t as f64 * k as f64 / delta).ln()).sqrt()
}

/// Everything needed to rebuild a [`UserModelState`] given its descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserModelSnapshot {
    pub params: UserModelParams,
    pub r0: Vec<f64>,
    pub feedback: Vec<Feedback>,
    pub pending: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct UserModelState {
    z: Arc<DescriptorMatrix>,
    params: UserModelParams,
    r0: Vec<f64>,
    feedback: Vec<Feedback>,
    pending: BTreeSet<usize>,
    queried: BTreeSet<usize>,
}

impl UserModelState {
    /// A model without pseudo-input (`r0 = b` everywhere).
    pub fn new(z: Arc<DescriptorMatrix>, params: UserModelParams) -> Result<Self> {
        params.validate()?;
        let r0 = vec![params.b; z.n_features()];
        Ok(UserModelState {
            z,
            params,
            r0,
            feedback: Vec::new(),
            pending: BTreeSet::new(),
            queried: BTreeSet::new(),
        })
    }

    /// Seed the model with pseudo-answers from the non-interactive weights:
    /// `r0_j = b + 0.5 * w_j / max |w|`, so pseudo-targets lie in
    /// `[b - 0.5, b + 0.5]`. All-zero weights leave `r0 = b`.
    pub fn init_with_pseudo(
        z: Arc<DescriptorMatrix>,
        w_hat: &[f64],
        params: UserModelParams,
    ) -> Result<Self> {
        if w_hat.len() != z.n_features() {
            return Err(Error::DimensionMismatch {
                expected: z.n_features(),
                actual: w_hat.len(),
            });
        }
        let mut state = UserModelState::new(z, params)?;
        let max = w_hat.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        if max > 0.0 {
            state.r0 = w_hat
                .iter()
                .map(|w| params.b + 0.5 * w / max)
                .collect();
        }
        Ok(state)
    }

    pub fn from_snapshot(z: Arc<DescriptorMatrix>, snap: UserModelSnapshot) -> Result<Self> {
        snap.params.validate()?;
        let k = z.n_features();
        if snap.r0.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: snap.r0.len(),
            });
        }
        let mut state = UserModelState {
            z,
            params: snap.params,
            r0: snap.r0,
            feedback: Vec::new(),
            pending: BTreeSet::new(),
            queried: BTreeSet::new(),
        };
        for fb in snap.feedback {
            if fb.feature >= k || !state.queried.insert(fb.feature) {
                return Err(Error::CorruptRecord(format!(
                    "invalid feedback entry for feature {}",
                    fb.feature
                )));
            }
            state.feedback.push(fb);
        }
        state.issue(&snap.pending)?;
        Ok(state)
    }

    pub fn snapshot(&self) -> UserModelSnapshot {
        UserModelSnapshot {
            params: self.params,
            r0: self.r0.clone(),
            feedback: self.feedback.clone(),
            pending: self.pending.iter().copied().collect(),
        }
    }

    pub fn params(&self) -> &UserModelParams {
        &self.params
    }

    pub fn descriptors(&self) -> &DescriptorMatrix {
        &self.z
    }

    pub fn pseudo_input(&self) -> &[f64] {
        &self.r0
    }

    pub fn feedback(&self) -> &[Feedback] {
        &self.feedback
    }

    pub fn pending(&self) -> impl Iterator<Item = usize> + '_ {
        self.pending.iter().copied()
    }

    pub fn is_queried(&self, j: usize) -> bool {
        self.queried.contains(&j)
    }

    pub fn n_unqueried(&self) -> usize {
        self.z.n_features() - self.queried.len()
    }

    pub fn unqueried(&self) -> Vec<usize> {
        (0..self.z.n_features())
            .filter(|j| !self.queried.contains(j))
            .collect()
    }

    fn gram(&self) -> (DMatrix<f64>, DVector<f64>) {
        let nz = self.z.n_cols();
        let b = self.params.b;
        let beta = self.params.beta;
        let mut gram = DMatrix::<f64>::identity(nz, nz) * self.params.lambda;
        let mut rhs = DVector::<f64>::zeros(nz);
        let mut add = |row: &[f64], weight: f64, target: f64| {
            for p in 0..nz {
                rhs[p] += weight * row[p] * target;
                for q in 0..nz {
                    gram[(p, q)] += weight * row[p] * row[q];
                }
            }
        };
        if beta > 0.0 {
            for j in 0..self.z.n_features() {
                add(self.z.row(j), beta, self.r0[j] - b);
            }
        }
        for fb in &self.feedback {
            let target = if fb.relevant { 1.0 } else { 0.0 };
            add(self.z.row(fb.feature), 1.0, target - b);
        }
        (gram, rhs)
    }

    /// Relevance estimates, widths and UCB scores at iteration `t >= 1`.
    pub fn estimate(&self, t: usize) -> Result<RelevanceEstimate> {
        if t == 0 {
            return Err(Error::InvalidParameter("iteration index starts at 1".into()));
        }
        let (gram, rhs) = self.gram();
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Numerical("user-model Gram matrix is not positive definite".into()))?;
        let v_hat = chol.solve(&rhs);
        let k = self.z.n_features();
        let b = self.params.b;
        let rho = exploration_radius(self.params.alpha, t, k, self.params.delta);
        let offset = logit(b);
        let mut r_hat = Vec::with_capacity(k);
        let mut r_hat_unit = Vec::with_capacity(k);
        let mut widths = Vec::with_capacity(k);
        let mut ucb = Vec::with_capacity(k);
        for j in 0..k {
            let zj = DVector::from_column_slice(self.z.row(j));
            let r = zj.dot(&v_hat) + b;
            let quad = zj.dot(&chol.solve(&zj)).max(0.0);
            let c = rho * quad.sqrt();
            r_hat.push(r);
            r_hat_unit.push(logistic(r - b + offset));
            widths.push(c);
            ucb.push(r + c);
        }
        Ok(RelevanceEstimate {
            v_hat: v_hat.iter().copied().collect(),
            r_hat,
            r_hat_unit,
            widths,
            ucb,
        })
    }

    /// The `n` unqueried features with the largest UCB, ties broken by
    /// ascending id.
    pub fn select(&self, estimate: &RelevanceEstimate, n: usize) -> Vec<usize> {
        let mut candidates = self.unqueried();
        candidates.sort_by(|&i, &j| {
            estimate.ucb[j]
                .total_cmp(&estimate.ucb[i])
                .then(i.cmp(&j))
        });
        candidates.truncate(n);
        candidates
    }

    /// Mark features as shown to the expert and awaiting an answer.
    pub fn issue(&mut self, ids: &[usize]) -> Result<()> {
        for &j in ids {
            if j >= self.z.n_features() {
                return Err(Error::UnknownFeature(j));
            }
            if self.queried.contains(&j) {
                return Err(Error::InvalidParameter(format!(
                    "feature {j} was already queried"
                )));
            }
        }
        for &j in ids {
            self.queried.insert(j);
            self.pending.insert(j);
        }
        Ok(())
    }

    /// Record answers to pending queries. Each feature can be answered once.
    pub fn record(&mut self, responses: &[(usize, bool)], iteration: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &(j, _) in responses {
            if !seen.insert(j) || (self.queried.contains(&j) && !self.pending.contains(&j)) {
                return Err(Error::DuplicateFeedback(j));
            }
            if !self.pending.contains(&j) {
                return Err(Error::UnqueriedFeedback(j));
            }
        }
        for &(feature, relevant) in responses {
            self.pending.remove(&feature);
            self.feedback.push(Feedback {
                feature,
                relevant,
                iteration,
            });
        }
        Ok(())
    }
}
