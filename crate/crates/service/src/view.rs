use std::collections::BTreeMap;

use elicit_core::dataset::{heatmap_summary, HeatmapData};
use elicit_core::session::{Condition, RelevanceSummary, Session};
use elicit_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    /// Waiting for the client to request a query.
    Ready,
    AwaitingFeedback,
    /// A query or a model refit is in progress.
    Updating,
    Terminal,
}

impl SessionStatus {
    pub fn of(session: &Session) -> Self {
        if session.pending().is_some() {
            SessionStatus::AwaitingFeedback
        } else if session.is_terminal() {
            SessionStatus::Terminal
        } else {
            SessionStatus::Ready
        }
    }
}

/// The features on screen, with the category heatmap and per-feature totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQueryView {
    pub features: Vec<String>,
    pub feature_ids: Vec<usize>,
    pub heatmap: HeatmapData,
    pub total_count: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatestMetrics {
    pub mse: f64,
    pub initial_mse: f64,
    pub n_relevant: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSessionView {
    pub id: String,
    pub condition: Condition,
    pub iteration: usize,
    pub max_iterations: usize,
    pub status: SessionStatus,
    pub pending_query: Option<PendingQueryView>,
    pub metrics: LatestMetrics,
    pub terminal: bool,
}

impl ApiSessionView {
    pub fn build(session: &Session, status: SessionStatus) -> Result<Self, ApiError> {
        let train = &session.data().train;
        let pending_query = match session.pending() {
            Some(ids) => {
                let heatmap = heatmap_summary(train, ids)?;
                Some(PendingQueryView {
                    features: ids.iter().map(|&j| train.feature_names()[j].clone()).collect(),
                    feature_ids: ids.to_vec(),
                    total_count: heatmap.total_count.clone(),
                    heatmap,
                })
            }
            None => None,
        };
        let history = session.mse_history();
        Ok(ApiSessionView {
            id: session.id().to_string(),
            condition: session.condition(),
            iteration: session.iteration(),
            max_iterations: session.config().max_iterations,
            status,
            pending_query,
            metrics: LatestMetrics {
                mse: *history.last().expect("history starts with the no-feedback MSE"),
                initial_mse: history[0],
                n_relevant: session.relevance().n_plus(),
            },
            terminal: session.is_terminal(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsView {
    pub mse_history: Vec<f64>,
    pub relevance: RelevanceSummary,
}

impl MetricsView {
    pub fn build(session: &Session) -> Result<Self, ApiError> {
        Ok(MetricsView {
            mse_history: session.mse_history().to_vec(),
            relevance: session.relevance_summary(10)?,
        })
    }
}

/// Map a `{feature name: 0|1}` body onto the pending query, reporting the
/// first offending name.
pub(crate) fn parse_feedback(
    session: &Session,
    answers: &BTreeMap<String, Value>,
) -> Result<Vec<(usize, bool)>, ApiError> {
    let Some(pending) = session.pending() else {
        let e = if session.is_terminal() { Error::Terminal } else { Error::NoPendingQuery };
        return Err(e.into());
    };
    let train = &session.data().train;
    let mut responses = Vec::with_capacity(answers.len());
    for (name, value) in answers {
        let j = train.feature_index(name).ok_or_else(|| ApiError::unknown_feature(name))?;
        if !pending.contains(&j) {
            return Err(ApiError::feature(
                "not_pending",
                name,
                format!("feature `{name}` is not part of the pending query"),
            ));
        }
        let relevant = match value.as_u64() {
            Some(0) => false,
            Some(1) => true,
            _ => {
                return Err(ApiError::feature(
                    "invalid_response",
                    name,
                    format!("response for `{name}` must be 0 or 1, got {value}"),
                ))
            }
        };
        responses.push((j, relevant));
    }
    if let Some(&missing) = pending.iter().find(|j| !responses.iter().any(|(r, _)| r == *j)) {
        let name = &train.feature_names()[missing];
        return Err(ApiError::feature(
            "missing_response",
            name,
            format!("no response for pending feature `{name}`"),
        ));
    }
    Ok(responses)
}
