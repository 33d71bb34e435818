//! Interactive labeling sessions over JSON and HTTP.
//!
//! Endpoints:
//!
//! - `POST /api/session` creates a session from a [`api::CreateSession`].
//! - `GET /api/session/{id}/graph` returns the immutable [`api::GraphView`].
//! - `GET /api/session/{id}/state?since=V` returns the [`api::StateView`],
//!   waiting for a version above `V` when given.
//! - `POST /api/session/{id}/label` submits an [`api::LabelRequest`].
//! - `POST /api/session/{id}/control` runs an [`api::ControlRequest`].
//!
//! Errors are `{"code": ..., "message": ...}` with a matching HTTP status.

pub mod api;
pub mod error;
mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use blockquery::{datasets, Campaign, CampaignConfig, ChainConfig, DatasetBundle};

use api::{ControlAck, ControlRequest, CreateSession, Created, GraphView, LabelAck, LabelRequest, NodeView, StateQuery, StateView};
pub use error::{ApiError, ErrorBody};
pub use session::SessionHandle;
use session::{spawn_session, SessionFiles};

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Directory searched for datasets other than the bundled karate club.
    pub data_dir: Option<PathBuf>,
    /// Sessions are persisted here after every stage when set.
    pub state_dir: Option<PathBuf>,
    /// Chain schedule for sessions that do not ask for one.
    pub default_chains: ChainConfig,
    /// Upper bound on a long-poll wait.
    pub long_poll: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: datasets::data_dir(),
            state_dir: None,
            default_chains: ChainConfig::karate_schedule(),
            long_poll: Duration::from_secs(25),
        }
    }
}

pub struct AppState {
    config: ServiceConfig,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        Arc::new(Self { config, sessions: RwLock::new(HashMap::new()), next_id: AtomicU64::new(1) })
    }

    /// Like [`AppState::new`], then reloads every session persisted in the
    /// state directory. Must run inside a Tokio runtime.
    pub fn restore(config: ServiceConfig) -> Result<Arc<Self>, ApiError> {
        let state = Self::new(config);
        let Some(dir) = state.config.state_dir.clone() else {
            return Ok(state);
        };
        std::fs::create_dir_all(&dir).map_err(|e| ApiError::internal(format!("{}: {e}", dir.display())))?;
        let entries = std::fs::read_dir(&dir).map_err(|e| ApiError::internal(format!("{}: {e}", dir.display())))?;
        let mut highest = 0;
        for entry in entries.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(id) = name.strip_suffix(".session.json") else {
                continue;
            };
            let files = SessionFiles::new(&dir, id);
            let request: CreateSession = read_json(&files.request)?;
            let trajectory = files.trajectory.exists().then(|| read_json(&files.trajectory)).transpose()?;
            let handle = state.start(id.to_string(), &request, trajectory, files)?;
            state.sessions.write().unwrap().insert(id.to_string(), Arc::new(handle));
            if let Some(n) = id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                highest = highest.max(n);
            }
            log::info!("restored session {id}");
        }
        state.next_id.store(highest + 1, Ordering::Relaxed);
        Ok(state)
    }

    pub fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.sessions.read().unwrap().get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }

    pub fn create(&self, request: &CreateSession) -> Result<Created, ApiError> {
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let files = match &self.config.state_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| ApiError::internal(format!("{}: {e}", dir.display())))?;
                let files = SessionFiles::new(dir, &id);
                files.write_request(request)?;
                Some(files)
            }
            None => None,
        };
        let handle = match files {
            Some(files) => self.start(id.clone(), request, None, files),
            None => self.start_unpersisted(id.clone(), request),
        }?;
        let version = handle.state().version;
        self.sessions.write().unwrap().insert(id.clone(), Arc::new(handle));
        Ok(Created { id, version })
    }

    fn start(
        &self,
        id: String,
        request: &CreateSession,
        trajectory: Option<blockquery::CampaignTrajectory>,
        files: SessionFiles,
    ) -> Result<SessionHandle, ApiError> {
        let (campaign, graph_json) = self.build(request, trajectory)?;
        Ok(spawn_session(id, campaign, graph_json, Some(files)))
    }

    fn start_unpersisted(&self, id: String, request: &CreateSession) -> Result<SessionHandle, ApiError> {
        let (campaign, graph_json) = self.build(request, None)?;
        Ok(spawn_session(id, campaign, graph_json, None))
    }

    fn build(
        &self,
        request: &CreateSession,
        trajectory: Option<blockquery::CampaignTrajectory>,
    ) -> Result<(Campaign, Bytes), ApiError> {
        let bundle = datasets::resolve(&request.dataset, request.directed, self.config.data_dir.as_deref())
            .map_err(|e| ApiError::bad_request("unknown-dataset", e.to_string()))?;
        let k = request
            .k
            .or(bundle.k())
            .ok_or_else(|| ApiError::bad_request("missing-k", "dataset has no labels; give k"))?;
        if k == 0 {
            return Err(ApiError::bad_request("invalid", "k must be at least 1"));
        }
        let truth_fits = bundle.k() == Some(k);
        let truth = if request.benchmark && truth_fits { bundle.truth.clone() } else { None };
        let class_names = match &bundle.class_names {
            Some(names) if truth_fits => names.clone(),
            _ => (0..k).map(|c| format!("class {c}")).collect(),
        };
        let graph_json = graph_payload(&bundle, k, class_names)?;
        let chains = request.chains.map(ChainConfig::from).unwrap_or(self.config.default_chains);
        let config = CampaignConfig::new(k, request.strategy, chains, request.seed);
        let graph = Arc::new(bundle.graph);
        let campaign = match trajectory {
            Some(t) => Campaign::resume(graph, t, truth)?,
            None => Campaign::new(graph, config, truth)?,
        };
        Ok((campaign, graph_json))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ApiError> {
    let text = std::fs::read_to_string(path).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))
}

fn graph_payload(bundle: &DatasetBundle, k: usize, class_names: Vec<String>) -> Result<Bytes, ApiError> {
    let g = &bundle.graph;
    let view = GraphView {
        dataset: bundle.meta.name.clone(),
        directed: g.is_directed(),
        n: g.n(),
        k,
        class_names,
        nodes: (0..g.n())
            .map(|v| NodeView {
                id: v,
                name: g.name(v),
                degree: g.degree(v),
                in_degree: g.in_degree(v),
                out_degree: g.out_degree(v),
            })
            .collect(),
        edges: g.edges().to_vec(),
    };
    serde_json::to_vec(&view).map(Bytes::from).map_err(|e| ApiError::internal(e.to_string()))
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(t)| t).map_err(|e| ApiError::bad_request("invalid-request", e.body_text()))
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let request = body(payload)?;
    Ok((StatusCode::CREATED, Json(app.create(&request)?)))
}

async fn get_graph(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, ApiError> {
    let session = app.session(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], session.graph_json()))
}

async fn get_state(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    query: Result<Query<StateQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<StateView>, ApiError> {
    let Query(query) = query.map_err(|e| ApiError::bad_request("invalid-request", e.body_text()))?;
    let session = app.session(&id)?;
    Ok(Json(match query.since {
        Some(since) => session.state_after(since, app.config.long_poll).await,
        None => session.state(),
    }))
}

async fn post_label(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<LabelRequest>, JsonRejection>,
) -> Result<Json<LabelAck>, ApiError> {
    let request = body(payload)?;
    Ok(Json(app.session(&id)?.label(request).await?))
}

async fn post_control(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<ControlRequest>, JsonRejection>,
) -> Result<Json<ControlAck>, ApiError> {
    let request = body(payload)?;
    Ok(Json(app.session(&id)?.control(request).await?))
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not-found", "no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/session", post(create_session))
        .route("/api/session/{id}/graph", get(get_graph))
        .route("/api/session/{id}/state", get(get_state))
        .route("/api/session/{id}/label", post(post_label))
        .route("/api/session/{id}/control", post(post_control))
        .fallback(fallback)
        .with_state(state)
}

/// Serves until the process is stopped. Optionally creates one session for
/// `dataset` at startup and logs its id.
pub async fn serve(addr: SocketAddr, config: ServiceConfig, dataset: Option<CreateSession>) -> std::io::Result<()> {
    let state = AppState::restore(config).map_err(|e| std::io::Error::other(e.to_string()))?;
    if let Some(request) = dataset {
        let created = state.create(&request).map_err(|e| std::io::Error::other(e.to_string()))?;
        log::info!("session {} ready for dataset {}", created.id, request.dataset);
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
