//! One elicitation run: fit the prediction model without feedback, then
//! alternate query → expert answers → refit until the iteration budget is
//! spent. Every random draw is keyed on the session seed and the iteration,
//! so a session is fully determined by its inputs and its answer transcript.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::descriptors::DescriptorMatrix;
use crate::error::{Error, Result};
use crate::prediction::{
    mean_squared_error, predict_dataset, sample_posterior, PosteriorChain, RelevanceVector,
    SamplerConfig,
};
use crate::seed;
use crate::usermodel::{UserModelParams, UserModelSnapshot, UserModelState};

pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// No interaction.
    #[serde(rename = "c1")]
    NonInteractive,
    /// Features queried in random order.
    #[serde(rename = "c2")]
    RandomOrder,
    /// Features queried by the user model.
    #[serde(rename = "c3")]
    UserModelGuided,
}

impl Condition {
    pub fn code(self) -> &'static str {
        match self {
            Condition::NonInteractive => "c1",
            Condition::RandomOrder => "c2",
            Condition::UserModelGuided => "c3",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "c1" | "non_interactive" | "noninteractive" => Ok(Condition::NonInteractive),
            "c2" | "random" | "random_order" => Ok(Condition::RandomOrder),
            "c3" | "user_model" | "user_model_guided" => Ok(Condition::UserModelGuided),
            other => Err(Error::InvalidParameter(format!("unknown condition `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub max_iterations: usize,
    pub batch_size: usize,
    pub user_model: UserModelParams,
    pub sampler: SamplerConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            max_iterations: 20,
            batch_size: 10,
            user_model: UserModelParams::default(),
            sampler: SamplerConfig::default(),
        }
    }
}

/// Train/test data and descriptors shared by any number of sessions.
#[derive(Debug, Clone)]
pub struct ElicitationData {
    pub train: Arc<Dataset>,
    pub test: Arc<Dataset>,
    pub descriptors: Arc<DescriptorMatrix>,
    fingerprint: String,
}

impl ElicitationData {
    pub fn new(train: Dataset, test: Dataset, descriptors: DescriptorMatrix) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if test.is_empty() {
            return Err(Error::Empty("test set"));
        }
        for names in [test.feature_names(), descriptors.feature_names()] {
            if names != train.feature_names() {
                return Err(Error::DimensionMismatch {
                    expected: train.n_features(),
                    actual: names.len(),
                });
            }
        }
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&train)?);
        hasher.update(serde_json::to_vec(&test)?);
        hasher.update(serde_json::to_vec(&descriptors)?);
        let fingerprint = hex(&hasher.finalize());
        Ok(ElicitationData {
            train: Arc::new(train),
            test: Arc::new(test),
            descriptors: Arc::new(descriptors),
            fingerprint,
        })
    }

    pub fn n_features(&self) -> usize {
        self.train.n_features()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One answered query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub query: Vec<usize>,
    /// Answers aligned with `query`.
    pub responses: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceSummary {
    pub n_relevant: usize,
    pub relevant_features: Vec<String>,
    /// Features with the highest estimated relevance on the (0, 1) scale.
    pub top_estimates: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub iteration: usize,
    pub mse: f64,
    pub relevance: RelevanceSummary,
    /// SHA-256 of the test-set predictions (little-endian f64 bytes).
    pub predictions_digest: String,
    pub terminal: bool,
}

/// Persistent form of a session; restoring it needs the same
/// [`ElicitationData`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub version: u32,
    pub id: String,
    pub condition: Condition,
    pub config: SessionConfig,
    pub seed: u64,
    pub data_fingerprint: String,
    pub iteration: usize,
    pub mse_history: Vec<f64>,
    pub transcript: Vec<TranscriptEntry>,
    pub pending: Option<Vec<usize>>,
    pub user_model: UserModelSnapshot,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    condition: Condition,
    config: SessionConfig,
    seed: u64,
    data: ElicitationData,
    iteration: usize,
    user_model: UserModelState,
    relevance: RelevanceVector,
    mse_history: Vec<f64>,
    transcript: Vec<TranscriptEntry>,
    pending: Option<Vec<usize>>,
    /// Posterior-mean weights of the latest fit.
    weights: Vec<f64>,
}

fn fit(
    data: &ElicitationData,
    r: &RelevanceVector,
    sampler: &SamplerConfig,
    session_seed: u64,
    iteration: usize,
) -> Result<(Vec<f64>, f64)> {
    let chain_seed = seed::derive(session_seed, seed::STREAM_CHAIN, iteration as u64);
    let chain: PosteriorChain = sample_posterior(&data.train, r, sampler, chain_seed)?;
    let weights = chain.mean_weights();
    let mse = mean_squared_error(data.test.targets(), &predict_dataset(&chain, &data.test)?);
    Ok((weights, mse))
}

impl Session {
    pub fn create(
        id: impl Into<String>,
        data: ElicitationData,
        condition: Condition,
        config: SessionConfig,
        seed: u64,
    ) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        let relevance = RelevanceVector::none(data.n_features());
        let (weights, mse0) = fit(&data, &relevance, &config.sampler, seed, 0)?;
        let user_model = match condition {
            Condition::UserModelGuided => UserModelState::init_with_pseudo(
                data.descriptors.clone(),
                &weights,
                config.user_model,
            )?,
            _ => UserModelState::new(data.descriptors.clone(), config.user_model)?,
        };
        Ok(Session {
            id: id.into(),
            condition,
            config,
            seed,
            data,
            iteration: 0,
            user_model,
            relevance,
            mse_history: vec![mse0],
            transcript: Vec::new(),
            pending: None,
            weights,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn data(&self) -> &ElicitationData {
        &self.data
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn mse_history(&self) -> &[f64] {
        &self.mse_history
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn pending(&self) -> Option<&[usize]> {
        self.pending.as_deref()
    }

    pub fn relevance(&self) -> &RelevanceVector {
        &self.relevance
    }

    pub fn user_model(&self) -> &UserModelState {
        &self.user_model
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_terminal(&self) -> bool {
        if self.pending.is_some() {
            return false;
        }
        self.condition == Condition::NonInteractive
            || self.iteration >= self.config.max_iterations
            || self.user_model.n_unqueried() == 0
    }

    /// Point prediction `x' E[w]` from the latest fit.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: x.len(),
            });
        }
        Ok(x.iter().zip(&self.weights).map(|(a, b)| a * b).sum())
    }

    /// Choose the next features to show. Must be answered before another
    /// query can be issued.
    pub fn next_query(&mut self) -> Result<Vec<usize>> {
        if self.pending.is_some() {
            return Err(Error::PendingQuery);
        }
        if self.is_terminal() {
            return Err(Error::Terminal);
        }
        let t = self.iteration + 1;
        let n = self.config.batch_size;
        let ids = match self.condition {
            Condition::UserModelGuided => {
                let est = self.user_model.estimate(t)?;
                self.user_model.select(&est, n)
            }
            Condition::RandomOrder => {
                let pool = self.user_model.unqueried();
                let mut rng = seed::rng(self.seed, seed::STREAM_RANDOM_QUERY, t as u64);
                rand::seq::index::sample(&mut rng, pool.len(), n.min(pool.len()))
                    .into_iter()
                    .map(|i| pool[i])
                    .collect()
            }
            Condition::NonInteractive => unreachable!("non-interactive sessions are terminal"),
        };
        self.user_model.issue(&ids)?;
        self.pending = Some(ids.clone());
        Ok(ids)
    }

    /// Apply answers to the pending query and refit the prediction model.
    /// Only positive answers change the prediction model's prior.
    pub fn submit_feedback(&mut self, responses: &[(usize, bool)]) -> Result<IterationResult> {
        let Some(pending) = self.pending.clone() else {
            return Err(if self.is_terminal() { Error::Terminal } else { Error::NoPendingQuery });
        };
        let ordered = align_responses(&pending, responses)?;
        let t = self.iteration + 1;
        let answers: Vec<(usize, bool)> = pending.iter().copied().zip(ordered.iter().copied()).collect();

        let mut relevance = self.relevance.clone();
        for &(j, relevant) in &answers {
            if relevant {
                relevance.set(j);
            }
        }
        let (weights, mse) = fit(&self.data, &relevance, &self.config.sampler, self.seed, t)?;

        self.user_model.record(&answers, t)?;
        self.relevance = relevance;
        self.weights = weights;
        self.mse_history.push(mse);
        self.iteration = t;
        self.pending = None;
        self.transcript.push(TranscriptEntry {
            query: pending,
            responses: ordered,
        });
        Ok(IterationResult {
            iteration: t,
            mse,
            relevance: self.relevance_summary(10)?,
            predictions_digest: self.predictions_digest(),
            terminal: self.is_terminal(),
        })
    }

    pub fn relevance_summary(&self, top: usize) -> Result<RelevanceSummary> {
        let names = self.data.train.feature_names();
        let est = self.user_model.estimate(self.iteration.max(1))?;
        let mut order: Vec<usize> = (0..names.len()).collect();
        order.sort_by(|&i, &j| est.r_hat_unit[j].total_cmp(&est.r_hat_unit[i]).then(i.cmp(&j)));
        Ok(RelevanceSummary {
            n_relevant: self.relevance.n_plus(),
            relevant_features: self
                .relevance
                .relevant_ids()
                .into_iter()
                .map(|j| names[j].clone())
                .collect(),
            top_estimates: order
                .into_iter()
                .take(top)
                .map(|j| (names[j].clone(), est.r_hat_unit[j]))
                .collect(),
        })
    }

    pub fn test_predictions(&self) -> Vec<f64> {
        let test = &self.data.test;
        (0..test.n_samples())
            .map(|i| {
                test.row(i)
                    .iter()
                    .zip(&self.weights)
                    .map(|(&x, &w)| x as f64 * w)
                    .sum()
            })
            .collect()
    }

    pub fn predictions_digest(&self) -> String {
        let mut hasher = Sha256::new();
        for p in self.test_predictions() {
            hasher.update(p.to_le_bytes());
        }
        hex(&hasher.finalize())
    }

    pub fn snapshot(&self) -> SessionRecord {
        SessionRecord {
            version: RECORD_VERSION,
            id: self.id.clone(),
            condition: self.condition,
            config: self.config.clone(),
            seed: self.seed,
            data_fingerprint: self.data.fingerprint.clone(),
            iteration: self.iteration,
            mse_history: self.mse_history.clone(),
            transcript: self.transcript.clone(),
            pending: self.pending.clone(),
            user_model: self.user_model.snapshot(),
            weights: self.weights.clone(),
        }
    }

    pub fn snapshot_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.snapshot())?)
    }

    pub fn restore(record: SessionRecord, data: ElicitationData) -> Result<Self> {
        if record.version != RECORD_VERSION {
            return Err(Error::VersionMismatch {
                found: record.version,
                expected: RECORD_VERSION,
            });
        }
        if record.data_fingerprint != data.fingerprint {
            return Err(Error::CorruptRecord(
                "record was made for different data".into(),
            ));
        }
        let k = data.n_features();
        if record.weights.len() != k
            || record.mse_history.len() != record.iteration + 1
            || record.transcript.len() != record.iteration
        {
            return Err(Error::CorruptRecord("inconsistent session history".into()));
        }
        let mut relevance = RelevanceVector::none(k);
        for entry in &record.transcript {
            if entry.query.len() != entry.responses.len() {
                return Err(Error::CorruptRecord("transcript entry length mismatch".into()));
            }
            for (&j, &rel) in entry.query.iter().zip(&entry.responses) {
                if j >= k {
                    return Err(Error::CorruptRecord(format!("feature {j} out of range")));
                }
                if rel {
                    relevance.set(j);
                }
            }
        }
        let user_model = UserModelState::from_snapshot(data.descriptors.clone(), record.user_model)?;
        let um_pending: Vec<usize> = user_model.pending().collect();
        let mut sorted_pending = record.pending.clone().unwrap_or_default();
        sorted_pending.sort_unstable();
        if um_pending != sorted_pending {
            return Err(Error::CorruptRecord("pending query disagrees with user model".into()));
        }
        Ok(Session {
            id: record.id,
            condition: record.condition,
            config: record.config,
            seed: record.seed,
            data,
            iteration: record.iteration,
            user_model,
            relevance,
            mse_history: record.mse_history,
            transcript: record.transcript,
            pending: record.pending,
            weights: record.weights,
        })
    }

    pub fn restore_json(json: &str, data: ElicitationData) -> Result<Self> {
        let record: SessionRecord =
            serde_json::from_str(json).map_err(|e| Error::CorruptRecord(e.to_string()))?;
        Session::restore(record, data)
    }

    /// Re-run a session from scratch, checking that every recorded query is
    /// reproduced before applying its answers.
    pub fn replay(
        id: impl Into<String>,
        data: ElicitationData,
        condition: Condition,
        config: SessionConfig,
        seed: u64,
        transcript: &[TranscriptEntry],
    ) -> Result<Self> {
        let mut session = Session::create(id, data, condition, config, seed)?;
        for (t, entry) in transcript.iter().enumerate() {
            let query = session.next_query()?;
            if query != entry.query {
                return Err(Error::CorruptRecord(format!(
                    "query {} differs on replay",
                    t + 1
                )));
            }
            let answers: Vec<(usize, bool)> = entry
                .query
                .iter()
                .copied()
                .zip(entry.responses.iter().copied())
                .collect();
            session.submit_feedback(&answers)?;
        }
        Ok(session)
    }
}

/// Order answers like the pending query, rejecting anything that does not
/// cover it exactly once.
fn align_responses(pending: &[usize], responses: &[(usize, bool)]) -> Result<Vec<bool>> {
    let mut out = vec![None; pending.len()];
    for &(j, rel) in responses {
        let Some(pos) = pending.iter().position(|&p| p == j) else {
            return Err(Error::FeedbackMismatch(format!("feature {j} is not pending")));
        };
        if out[pos].replace(rel).is_some() {
            return Err(Error::FeedbackMismatch(format!("feature {j} answered twice")));
        }
    }
    out.into_iter()
        .zip(pending)
        .map(|(r, j)| r.ok_or_else(|| Error::FeedbackMismatch(format!("feature {j} not answered"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_codes_round_trip() {
        for c in [Condition::NonInteractive, Condition::RandomOrder, Condition::UserModelGuided] {
            assert_eq!(c.code().parse::<Condition>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.code()));
        }
        assert!("c4".parse::<Condition>().is_err());
    }

    #[test]
    fn align_responses_contract() {
        assert_eq!(align_responses(&[3, 1], &[(1, true), (3, false)]).unwrap(), vec![false, true]);
        assert!(align_responses(&[3, 1], &[(1, true)]).is_err());
        assert!(align_responses(&[3, 1], &[(1, true), (3, false), (2, true)]).is_err());
        assert!(align_responses(&[3, 1], &[(1, true), (1, false)]).is_err());
    }
}
