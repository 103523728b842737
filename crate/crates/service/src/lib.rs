//! HTTP front end for elicitation sessions.
//!
//! Sessions live in memory. Mutating requests on one session are serialized
//! by rejection: while a query is being issued or feedback is being applied,
//! a second mutation gets `409 Conflict` instead of waiting. Reads during a
//! model refit return the last settled view with status `"updating"`.

mod error;
mod view;

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use elicit_core::dataset::heatmap_summary;
use elicit_core::session::{Condition, ElicitationData, IterationResult, Session, SessionConfig, SessionRecord};
use serde::Deserialize;
use serde_json::Value;

pub use error::ApiError;
pub use view::{ApiSessionView, MetricsView, PendingQueryView, SessionStatus};

struct SessionSlot {
    data: ElicitationData,
    session: Mutex<Session>,
    busy: AtomicBool,
    /// Last view built while the session was idle.
    settled: Mutex<ApiSessionView>,
}

impl SessionSlot {
    fn refresh(&self, session: &Session) -> Result<ApiSessionView, ApiError> {
        let view = ApiSessionView::build(session, SessionStatus::of(session))?;
        *self.settled.lock().unwrap() = view.clone();
        Ok(view)
    }
}

/// Clears the busy flag on every exit path.
struct BusyGuard(Arc<SessionSlot>);

impl Drop for BusyGuard {
    fn drop(&mut self) {
        self.0.busy.store(false, Ordering::Release);
    }
}

pub struct AppState {
    datasets: BTreeMap<String, ElicitationData>,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    config: SessionConfig,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(config: SessionConfig) -> Self {
        AppState {
            datasets: BTreeMap::new(),
            sessions: RwLock::new(HashMap::new()),
            config,
            next_id: AtomicU64::new(1),
        }
    }

    pub fn with_dataset(mut self, name: impl Into<String>, data: ElicitationData) -> Self {
        self.datasets.insert(name.into(), data);
        self
    }

    pub fn dataset_names(&self) -> Vec<String> {
        self.datasets.keys().cloned().collect()
    }

    fn slot(&self, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn claim(&self, id: &str) -> Result<BusyGuard, ApiError> {
        let slot = self.slot(id)?;
        slot.busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .map_err(|_| ApiError::conflict("busy", "another request is updating this session"))?;
        Ok(BusyGuard(slot))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/query", post(issue_query))
        .route("/sessions/{id}/feedback", post(submit_feedback))
        .route("/sessions/{id}/heatmap", get(heatmap))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/sessions/{id}/snapshot", get(snapshot))
        .with_state(state)
}

/// Bind and serve until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(serde_json::json!({"status": "ok", "datasets": state.dataset_names()}))
}

#[derive(Debug, Deserialize)]
struct CreateRequest {
    dataset: String,
    condition: String,
    seed: u64,
    #[serde(default)]
    id: Option<String>,
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<ApiSessionView>), ApiError> {
    let Json(req) = body.map_err(ApiError::from_rejection)?;
    let data = state
        .datasets
        .get(&req.dataset)
        .cloned()
        .ok_or_else(|| ApiError::unprocessable("unknown_dataset", format!("no dataset named `{}`", req.dataset)))?;
    let condition: Condition = req.condition.parse()?;
    let id = match req.id {
        Some(id) if id.is_empty() => return Err(ApiError::unprocessable("invalid_id", "empty session id")),
        Some(id) => id,
        None => format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed)),
    };
    if state.sessions.read().unwrap().contains_key(&id) {
        return Err(ApiError::conflict("duplicate_session", format!("session `{id}` exists")));
    }
    let config = state.config.clone();
    let session_id = id.clone();
    let session = tokio::task::spawn_blocking(move || Session::create(session_id, data, condition, config, req.seed))
        .await
        .map_err(ApiError::internal)??;
    let view = ApiSessionView::build(&session, SessionStatus::of(&session))?;
    let slot = Arc::new(SessionSlot {
        data: session.data().clone(),
        session: Mutex::new(session),
        busy: AtomicBool::new(false),
        settled: Mutex::new(view.clone()),
    });
    let mut sessions = state.sessions.write().unwrap();
    if sessions.contains_key(&id) {
        return Err(ApiError::conflict("duplicate_session", format!("session `{id}` exists")));
    }
    sessions.insert(id, slot);
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<ApiSessionView>, ApiError> {
    let slot = state.slot(&id)?;
    let mut view = slot.settled.lock().unwrap().clone();
    if slot.busy.load(Ordering::Acquire) {
        view.status = SessionStatus::Updating;
    }
    Ok(Json(view))
}

async fn issue_query(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<ApiSessionView>, ApiError> {
    let guard = state.claim(&id)?;
    let view = tokio::task::spawn_blocking(move || {
        let slot = &guard.0;
        let mut session = slot.session.lock().unwrap();
        session.next_query()?;
        slot.refresh(&session)
    })
    .await
    .map_err(ApiError::internal)??;
    Ok(Json(view))
}

async fn submit_feedback(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<BTreeMap<String, Value>>, JsonRejection>,
) -> Result<Json<IterationResult>, ApiError> {
    let Json(answers) = body.map_err(ApiError::from_rejection)?;
    let guard = state.claim(&id)?;
    let result = tokio::task::spawn_blocking(move || {
        let slot = &guard.0;
        let mut session = slot.session.lock().unwrap();
        let responses = view::parse_feedback(&session, &answers)?;
        let result = session.submit_feedback(&responses)?;
        slot.refresh(&session)?;
        Ok::<_, ApiError>(result)
    })
    .await
    .map_err(ApiError::internal)??;
    Ok(Json(result))
}

#[derive(Debug, Deserialize)]
struct HeatmapQuery {
    features: Option<String>,
}

async fn heatmap(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HeatmapQuery>,
) -> Result<Json<elicit_core::dataset::HeatmapData>, ApiError> {
    let data = &state.slot(&id)?.data;
    let names: Vec<&str> = q
        .features
        .as_deref()
        .unwrap_or("")
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if names.is_empty() {
        return Err(ApiError::unprocessable("missing_features", "pass ?features=name,name"));
    }
    let ids = names
        .iter()
        .map(|n| data.train.feature_index(n).ok_or_else(|| ApiError::unknown_feature(n)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Json(heatmap_summary(&data.train, &ids)?))
}

async fn metrics(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<MetricsView>, ApiError> {
    let slot = state.slot(&id)?;
    let session = slot.session.lock().unwrap();
    Ok(Json(MetricsView::build(&session)?))
}

async fn snapshot(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<SessionRecord>, ApiError> {
    let slot = state.slot(&id)?;
    let session = slot.session.lock().unwrap();
    Ok(Json(session.snapshot()))
}
