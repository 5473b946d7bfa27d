//! HTTP/JSON API over labeling sessions.
//!
//! Each session holds at most one outstanding ticket. `GET .../next` returns
//! it (issuing one if needed) and `POST .../labels` answers it. Draws of
//! examples that already carry a label are answered by the server itself and
//! their events are attached to the next ticket.

pub mod api;
mod store;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use egal_core::engine::{EngineError, Event, RunConfig, Session};
use egal_core::Dataset;
use sha2::{Digest, Sha256};
use thiserror::Error;

use api::{
    Budget, CreateSession, ErrorBody, LabelResponse, NextQuery, SessionHandle, SessionState,
    SubmitLabel,
};
pub use store::StoreError;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{message}")]
    BadRequest {
        message: String,
        field: Option<String>,
    },
    #[error("{0}")]
    NotFound(String),
    #[error("session is exhausted")]
    Exhausted { events: Vec<Event> },
    #[error("{0}")]
    Conflict(String),
    #[error("ticket {0} is stale")]
    Gone(u64),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn bad(message: impl Into<String>) -> Self {
        Self::BadRequest {
            message: message.into(),
            field: None,
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(c) => Self::BadRequest {
                message: c.to_string(),
                field: Some(c.field),
            },
            EngineError::EmptyLabel => Self::BadRequest {
                message: e.to_string(),
                field: Some("label".into()),
            },
            EngineError::StaleTicket(id) => Self::Gone(id),
            EngineError::Exhausted => Self::Exhausted { events: Vec::new() },
            EngineError::TicketOutstanding(_) => Self::Conflict(e.to_string()),
            EngineError::EmptyPool => Self::bad(e.to_string()),
            other => Self::Internal(other.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            Self::BadRequest { .. } => StatusCode::BAD_REQUEST,
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::Exhausted { .. } | Self::Conflict(_) => StatusCode::CONFLICT,
            Self::Gone(_) => StatusCode::GONE,
            Self::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let message = self.to_string();
        let body = match self {
            Self::BadRequest { field, .. } => ErrorBody {
                error: message,
                field,
                events: Vec::new(),
            },
            Self::Exhausted { events } => ErrorBody {
                error: message,
                field: None,
                events,
            },
            _ => ErrorBody {
                error: message,
                field: None,
                events: Vec::new(),
            },
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub(crate) struct Entry {
    pub handle: SessionHandle,
    pub session: Session,
    /// Events of server-answered draws, delivered with the outstanding ticket.
    pub pending_events: Vec<Event>,
}

/// Shared server state: the loaded datasets and the live sessions.
pub struct AppState {
    datasets: HashMap<String, Arc<Dataset>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    snapshot_dir: Option<PathBuf>,
}

impl AppState {
    /// Builds the state and, if `snapshot_dir` is set, restores every session
    /// saved there.
    pub fn new(
        datasets: HashMap<String, Arc<Dataset>>,
        snapshot_dir: Option<PathBuf>,
    ) -> Result<Self, StoreError> {
        let mut sessions = HashMap::new();
        if let Some(dir) = &snapshot_dir {
            std::fs::create_dir_all(dir).map_err(|e| StoreError::Io(dir.clone(), e))?;
            for entry in store::load_all(dir, &datasets)? {
                sessions.insert(entry.handle.session_id.clone(), Arc::new(Mutex::new(entry)));
            }
            log::info!("restored {} sessions from {}", sessions.len(), dir.display());
        }
        Ok(Self {
            datasets,
            sessions: RwLock::new(sessions),
            snapshot_dir,
        })
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map poisoned").len()
    }

    fn entry(&self, id: &str) -> ApiResult<Arc<Mutex<Entry>>> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown session `{id}`")))
    }

    fn persist(&self, entry: &Entry) -> ApiResult<()> {
        if let Some(dir) = &self.snapshot_dir {
            store::save(dir, entry).map_err(|e| ApiError::Internal(e.to_string()))?;
        }
        Ok(())
    }

    pub fn create(&self, req: CreateSession) -> ApiResult<SessionHandle> {
        let dataset = self
            .datasets
            .get(&req.dataset)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown dataset `{}`", req.dataset)))?;
        let config_value = match req.config {
            serde_json::Value::Null => serde_json::Value::Object(Default::default()),
            v => v,
        };
        let config: RunConfig = serde_json::from_value(config_value).map_err(|e| ApiError::BadRequest {
            message: format!("invalid config: {e}"),
            field: Some("config".into()),
        })?;
        let session = Session::new(config.clone(), dataset)?;
        let handle = SessionHandle {
            session_id: uuid::Uuid::new_v4().to_string(),
            dataset: req.dataset,
            created_at_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis() as u64),
            config_digest: config_digest(&config),
        };
        let entry = Entry {
            handle: handle.clone(),
            session,
            pending_events: Vec::new(),
        };
        self.persist(&entry)?;
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(handle.session_id.clone(), Arc::new(Mutex::new(entry)));
        Ok(handle)
    }

    pub fn next(&self, id: &str) -> ApiResult<NextQuery> {
        let entry = self.entry(id)?;
        let mut guard = entry.lock().expect("session poisoned");
        let e = &mut *guard;
        if let Some(ticket) = e.session.outstanding().cloned() {
            return Ok(NextQuery::build(&e.session, &ticket, e.pending_events.clone()));
        }
        let mut changed = false;
        let result = loop {
            let ticket = match e.session.next_query() {
                Ok(t) => t,
                Err(EngineError::Exhausted) => {
                    break Err(ApiError::Exhausted {
                        events: std::mem::take(&mut e.pending_events),
                    })
                }
                Err(err) => break Err(err.into()),
            };
            changed = true;
            if !ticket.free_lookup {
                break Ok(NextQuery::build(&e.session, &ticket, e.pending_events.clone()));
            }
            let label = e
                .session
                .label_of(ticket.example_index)
                .expect("free lookup has a stored label")
                .to_string();
            match e.session.submit_label(ticket.ticket_id, &label) {
                Ok(events) => e.pending_events.extend(events),
                Err(err) => break Err(err.into()),
            }
        };
        if changed {
            self.persist(e)?;
        }
        result
    }

    pub fn label(&self, id: &str, req: SubmitLabel) -> ApiResult<LabelResponse> {
        let entry = self.entry(id)?;
        let mut guard = entry.lock().expect("session poisoned");
        let e = &mut *guard;
        let events = e.session.submit_label(req.ticket_id, &req.label)?;
        e.pending_events.clear();
        self.persist(e)?;
        Ok(LabelResponse {
            events,
            budget: Budget::of(&e.session),
            phase: e.session.phase(),
        })
    }

    pub fn state(&self, id: &str) -> ApiResult<SessionState> {
        let entry = self.entry(id)?;
        let e = entry.lock().expect("session poisoned");
        Ok(SessionState::build(&e.handle, &e.session))
    }

    pub fn list(&self) -> Vec<SessionHandle> {
        let map = self.sessions.read().expect("session map poisoned");
        let mut handles: Vec<SessionHandle> = map
            .values()
            .map(|e| e.lock().expect("session poisoned").handle.clone())
            .collect();
        handles.sort_by(|a, b| (a.created_at_ms, &a.session_id).cmp(&(b.created_at_ms, &b.session_id)));
        handles
    }

    pub fn dataset_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.datasets.keys().cloned().collect();
        names.sort();
        names
    }
}

/// First 16 hex digits of the SHA-256 of the resolved configuration.
pub fn config_digest(config: &RunConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&json);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Engine calls can take a while (fitting search temperatures, retraining),
/// so they run off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn list_datasets(State(state): State<Arc<AppState>>) -> Json<Vec<String>> {
    Json(state.dataset_names())
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Vec<SessionHandle>> {
    Json(state.list())
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionHandle>)> {
    let Json(req) = body?;
    let handle = blocking(move || state.create(req)).await?;
    Ok((StatusCode::CREATED, Json(handle)))
}

async fn next_query(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<NextQuery>> {
    Ok(Json(blocking(move || state.next(&id)).await?))
}

async fn submit_label(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<SubmitLabel>, JsonRejection>,
) -> ApiResult<Json<LabelResponse>> {
    let Json(req) = body?;
    Ok(Json(blocking(move || state.label(&id, req)).await?))
}

async fn session_state(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionState>> {
    Ok(Json(state.state(&id)?))
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/datasets", get(list_datasets))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}/next", get(next_query))
        .route("/sessions/{id}/labels", post(submit_label))
        .route("/sessions/{id}/state", get(session_state));
    Router::new()
        .route("/healthz", get(healthz))
        .nest("/api/v1", api)
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
