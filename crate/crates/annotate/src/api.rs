//! JSON API over a [`Store`].

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use tower_http::services::ServeDir;

use gapcheck_core::citescreen::{
    coverage, extract_citations, screen, Citation, CoverageReport, ScreenConfig, ScreeningSignals,
};
use gapcheck_core::corpus::{AnnotatedExample, GenerationRecord};

use crate::store::{EventKind, Progress, Store, StoreError};

pub struct AppState {
    pub store: Store,
    sessions: RwLock<HashMap<String, String>>,
}

impl AppState {
    pub fn new(store: Store) -> Arc<Self> {
        Arc::new(AppState {
            store,
            sessions: RwLock::new(HashMap::new()),
        })
    }

    fn annotator_for(&self, session_id: &str) -> Result<String, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(session_id)
            .cloned()
            .ok_or_else(|| {
                ApiError::new(
                    StatusCode::NOT_FOUND,
                    format!("unknown session {session_id:?}"),
                )
            })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::Label(_)
            | StoreError::MissingExplanation
            | StoreError::MissingAnnotator => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::UnknownRecord(_) | StoreError::Empty => StatusCode::NOT_FOUND,
            StoreError::Io(_) | StoreError::Corrupt { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub annotator_id: String,
    pub records_digest: String,
    pub cursor: usize,
    pub completed: usize,
    pub total: usize,
}

#[derive(Deserialize)]
struct SessionQuery {
    annotator_id: String,
}

fn session_view(app: &AppState, session_id: String, annotator_id: String) -> SessionView {
    SessionView {
        cursor: app.store.cursor(&annotator_id),
        completed: app.store.completed(&annotator_id),
        total: app.store.records().len(),
        records_digest: app.store.digest().to_owned(),
        session_id,
        annotator_id,
    }
}

async fn open_session(
    State(app): State<Arc<AppState>>,
    Query(q): Query<SessionQuery>,
) -> ApiResult<SessionView> {
    let annotator_id = q.annotator_id.trim().to_owned();
    if annotator_id.is_empty() {
        return Err(StoreError::MissingAnnotator.into());
    }
    let digest = Sha256::digest(format!("{}\n{}", app.store.digest(), annotator_id));
    let session_id = hex::encode(&digest[..8]);
    app.sessions
        .write()
        .unwrap()
        .insert(session_id.clone(), annotator_id.clone());
    Ok(Json(session_view(&app, session_id, annotator_id)))
}

#[derive(Deserialize)]
struct SessionRef {
    session_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Highlights {
    pub generation: Vec<Citation>,
    pub target: Vec<Citation>,
    pub previous_text: Vec<Citation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextView {
    pub index: usize,
    pub total: usize,
    pub record: GenerationRecord,
    pub coverage: CoverageReport,
    pub screening: ScreeningSignals,
    /// Spans are byte offsets into the UTF-8 field text.
    pub citations: Highlights,
}

async fn next(
    State(app): State<Arc<AppState>>,
    Query(q): Query<SessionRef>,
) -> ApiResult<NextView> {
    let annotator_id = app.annotator_for(&q.session_id)?;
    let index = app.store.cursor(&annotator_id);
    let record = app.store.record(index).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "exhausted: every record is labeled")
    })?;
    Ok(Json(NextView {
        index,
        total: app.store.records().len(),
        coverage: coverage(record),
        screening: screen(record, &ScreenConfig::default()),
        citations: Highlights {
            generation: extract_citations(&record.generation),
            target: extract_citations(&record.target),
            previous_text: extract_citations(&record.previous_text),
        },
        record: record.clone(),
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub session_id: String,
    pub record_id: String,
    pub label: Vec<i64>,
    #[serde(default)]
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub seq: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supersedes: Option<u64>,
    pub annotation: AnnotatedExample,
    pub session: SessionView,
}

async fn submit(
    State(app): State<Arc<AppState>>,
    Json(req): Json<SubmitRequest>,
) -> Result<(StatusCode, Json<SubmitResponse>), ApiError> {
    let annotator_id = app.annotator_for(&req.session_id)?;
    let event = app.store.submit(
        &annotator_id,
        &req.record_id,
        &req.label,
        &req.explanation,
        Utc::now(),
    )?;
    let status = match event.kind {
        EventKind::Submit => StatusCode::CREATED,
        EventKind::Resubmit => StatusCode::OK,
    };
    Ok((
        status,
        Json(SubmitResponse {
            seq: event.seq,
            kind: event.kind,
            supersedes: event.supersedes,
            annotation: event.annotation,
            session: session_view(&app, req.session_id, annotator_id),
        }),
    ))
}

#[derive(Deserialize)]
struct ScopeQuery {
    session_id: Option<String>,
    #[serde(default)]
    embed_records: bool,
}

impl ScopeQuery {
    fn annotator(&self, app: &AppState) -> Result<Option<String>, ApiError> {
        self.session_id
            .as_deref()
            .map(|s| app.annotator_for(s))
            .transpose()
    }
}

async fn progress(
    State(app): State<Arc<AppState>>,
    Query(q): Query<ScopeQuery>,
) -> ApiResult<Progress> {
    let annotator = q.annotator(&app)?;
    Ok(Json(app.store.progress(annotator.as_deref())))
}

async fn export(
    State(app): State<Arc<AppState>>,
    Query(q): Query<ScopeQuery>,
) -> Result<Response, ApiError> {
    let annotator = q.annotator(&app)?;
    let body = app.store.export(annotator.as_deref(), q.embed_records)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

pub fn router(app: Arc<AppState>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/session", get(open_session))
        .route("/api/next", get(next))
        .route("/api/annotations", post(submit))
        .route("/api/progress", get(progress))
        .route("/api/export", get(export))
        .with_state(app);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}
