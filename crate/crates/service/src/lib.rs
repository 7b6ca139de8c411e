//! Local HTTP API over the adjudication queue.
//!
//! Routes:
//!
//! - `GET /queue?state=&page=&page_size=&annotator_id=` oldest-first page of entries
//! - `GET /entry/{sample_id}?annotator_id=` one entry with its full context
//! - `POST /entry/{sample_id}/label` submit a verdict
//! - `GET /agreement` kappa report over dually labelled entries
//! - `GET /media/{path}` files under the configured media root
//!
//! Sample ids contain `#` and `/`, so clients must percent-encode them. Errors
//! are `{code, message}` with the codes of [`AnnotationError::code`].
//!
//! Blinding: human labels and the resolution of an entry are only returned to
//! a viewer whose `annotator_id` already labelled that entry.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use stancegen_core::annotation::{
    compute_agreement_report, AgreementReport, AnnotationError, AnnotationQueue, AnnotationRecord,
    Dimension, ModelLabel, QueueEntry, QueueState, Resolution, SampleContext,
};
use stancegen_core::{StanceLabel, StyleCategory, TopicCategory};

pub const DEFAULT_PAGE_SIZE: usize = 10;
pub const MAX_PAGE_SIZE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewPolicy {
    pub show_model_labels: bool,
    pub blind_human_labels: bool,
}

impl Default for ViewPolicy {
    fn default() -> Self {
        Self {
            show_model_labels: true,
            blind_human_labels: true,
        }
    }
}

pub struct AppState {
    /// Writes are serialised through this lock, one event at a time.
    pub queue: Mutex<AnnotationQueue>,
    pub media_root: Option<PathBuf>,
    pub policy: ViewPolicy,
}

impl AppState {
    pub fn new(queue: AnnotationQueue) -> Self {
        Self {
            queue: Mutex::new(queue),
            media_root: None,
            policy: ViewPolicy::default(),
        }
    }

    pub fn with_media_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.media_root = Some(root.into());
        self
    }

    pub fn with_policy(mut self, policy: ViewPolicy) -> Self {
        self.policy = policy;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(skip)]
    pub status: u16,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
            status: status.as_u16(),
        }
    }
}

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        let status = match &e {
            AnnotationError::UnknownSample(_) => StatusCode::NOT_FOUND,
            AnnotationError::DuplicateAnnotator { .. }
            | AnnotationError::AnnotatorNotIndependent { .. }
            | AnnotationError::EntryAlreadyResolved(_)
            | AnnotationError::WrongState { .. }
            | AnnotationError::AlreadyQueued(_)
            | AnnotationError::NoDualAnnotations => StatusCode::CONFLICT,
            AnnotationError::InvalidRecord(_) | AnnotationError::SampleMismatch { .. } => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            AnnotationError::Log(_) | AnnotationError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

/// A human label as shown to a viewer; verdict fields are `None` when masked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelView {
    pub annotator_id: Option<String>,
    pub stance: Option<StanceLabel>,
    pub topic: Option<TopicCategory>,
    pub style: Option<StyleCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryView {
    pub sample_id: String,
    pub state: QueueState,
    pub context: SampleContext,
    pub model_labels: Vec<ModelLabel>,
    /// Number of human labels so far, visible even when they are masked.
    pub human_label_count: usize,
    pub human_labels: Vec<LabelView>,
    pub masked: bool,
    pub resolution: Option<Resolution>,
}

impl EntryView {
    pub fn of(entry: &QueueEntry, viewer: Option<&str>, policy: ViewPolicy) -> Self {
        let revealed = !policy.blind_human_labels || viewer.is_some_and(|v| entry.has_annotator(v));
        let human_labels = entry
            .human_labels
            .iter()
            .map(|r| {
                if revealed {
                    LabelView {
                        annotator_id: Some(r.annotator_id.clone()),
                        stance: Some(r.stance),
                        topic: Some(r.topic),
                        style: r.style,
                    }
                } else {
                    LabelView {
                        annotator_id: None,
                        stance: None,
                        topic: None,
                        style: None,
                    }
                }
            })
            .collect();
        Self {
            sample_id: entry.sample_id.clone(),
            state: entry.state,
            context: entry.context.clone(),
            model_labels: if policy.show_model_labels {
                entry.model_labels.clone()
            } else {
                Vec::new()
            },
            human_label_count: entry.human_labels.len(),
            human_labels,
            masked: !revealed && !entry.human_labels.is_empty(),
            resolution: if revealed { entry.resolution.clone() } else { None },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub entries: Vec<EntryView>,
    /// 1-based.
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub total_pages: usize,
}

#[derive(Debug, Default, Deserialize)]
pub struct QueueQuery {
    pub state: Option<String>,
    pub page: Option<usize>,
    pub page_size: Option<usize>,
    pub annotator_id: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
pub struct ViewerQuery {
    pub annotator_id: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelBody {
    pub annotator_id: String,
    pub stance: StanceLabel,
    pub topic: TopicCategory,
    #[serde(default)]
    pub style: Option<StyleCategory>,
}

type Shared = Arc<AppState>;

fn lock(state: &AppState) -> Result<std::sync::MutexGuard<'_, AnnotationQueue>, ApiError> {
    state
        .queue
        .lock()
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", "queue lock poisoned"))
}

fn bad_request(code: &str, message: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, code, message)
}

async fn get_queue(
    State(state): State<Shared>,
    query: Result<Query<QueueQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<QueuePage>, ApiError> {
    let Query(q) = query.map_err(|e| bad_request("InvalidQuery", e.body_text()))?;
    let filter = q
        .state
        .as_deref()
        .filter(|s| !s.is_empty())
        .map(str::parse::<QueueState>)
        .transpose()
        .map_err(|e| bad_request("InvalidQuery", e))?;
    let page = q.page.unwrap_or(1);
    let page_size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
    if page == 0 {
        return Err(bad_request("InvalidQuery", "page is 1-based"));
    }
    if page_size == 0 || page_size > MAX_PAGE_SIZE {
        return Err(bad_request(
            "InvalidQuery",
            format!("page_size must lie in 1..={MAX_PAGE_SIZE}"),
        ));
    }
    let queue = lock(&state)?;
    let all = queue.list(filter);
    let total = all.len();
    let entries = all
        .into_iter()
        .skip((page - 1) * page_size)
        .take(page_size)
        .map(|e| EntryView::of(e, q.annotator_id.as_deref(), state.policy))
        .collect();
    Ok(Json(QueuePage {
        entries,
        page,
        page_size,
        total,
        total_pages: total.div_ceil(page_size),
    }))
}

async fn get_entry(
    State(state): State<Shared>,
    Path(sample_id): Path<String>,
    Query(viewer): Query<ViewerQuery>,
) -> Result<Json<EntryView>, ApiError> {
    let queue = lock(&state)?;
    let entry = queue
        .get(&sample_id)
        .ok_or(AnnotationError::UnknownSample(sample_id.clone()))?;
    Ok(Json(EntryView::of(entry, viewer.annotator_id.as_deref(), state.policy)))
}

async fn post_label(
    State(state): State<Shared>,
    Path(rest): Path<String>,
    body: Result<Json<LabelBody>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<EntryView>, ApiError> {
    let sample_id = rest
        .strip_suffix("/label")
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "NotFound", format!("no route POST /entry/{rest}")))?;
    let Json(body) = body.map_err(|e| bad_request("InvalidBody", e.body_text()))?;
    let record = AnnotationRecord {
        annotator_id: body.annotator_id,
        sample_id: sample_id.to_string(),
        stance: body.stance,
        topic: body.topic,
        style: body.style,
        timestamp: Utc::now(),
    };
    let viewer = record.annotator_id.clone();
    let mut queue = lock(&state)?;
    let entry = queue.submit(record)?;
    log::info!("{} labelled {sample_id}: now {:?}", viewer, entry.state);
    Ok(Json(EntryView::of(entry, Some(&viewer), state.policy)))
}

async fn get_agreement(State(state): State<Shared>) -> Result<Json<AgreementReport>, ApiError> {
    let records = lock(&state)?.records();
    Ok(Json(compute_agreement_report(
        &records,
        &[Dimension::Stance, Dimension::Topic],
    )?))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such route")
}

pub fn router(state: AppState) -> Router {
    let media = state.media_root.clone();
    let mut app = Router::new()
        .route("/queue", get(get_queue))
        .route("/entry/{*sample_id}", get(get_entry).post(post_label))
        .route("/agreement", get(get_agreement));
    if let Some(root) = media {
        app = app.nest_service("/media", ServeDir::new(root));
    }
    app.fallback(not_found).with_state(Arc::new(state))
}

/// Binds `127.0.0.1:port` and serves until ctrl-c.
pub async fn serve(state: AppState, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
