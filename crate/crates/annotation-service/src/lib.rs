//! HTTP backend for annotating a corpus: each registered annotator walks the
//! utterances in id order, submits one record per utterance, and the service
//! reports live agreement and exports the merged manifest.
//!
//! Endpoints (all JSON unless noted):
//!
//! - `GET /api/tasks/next?annotator=ID`: next pending task, or `204` when the
//!   annotator is done.
//! - `GET /api/media/{utterance_id}.wav`: the utterance's audio clip.
//! - `GET /api/media/{utterance_id}.mp4`: the parent video file.
//! - `POST /api/annotations`: submit an annotation record.
//! - `GET /api/agreement`: per-facet pairwise agreement and progress.
//! - `GET /api/export`: merged manifest as JSON lines.
//!
//! Media responses honour single byte-range requests.

pub mod media;
pub mod store;

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

pub use media::{parse_range, MediaKind, RangeRequest};
pub use store::{
    AgreementSnapshot, AnnotationStore, AnnotationTask, ClipRefs, FacetAgreement, StoreError, SubmitAck, TaskStatus,
};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
        }
    }

    fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "InternalError", message.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let (status, kind) = match &e {
            StoreError::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "ValidationError"),
            StoreError::UnknownUtterance(_) => (StatusCode::NOT_FOUND, "UnknownUtterance"),
            StoreError::UnknownAnnotator(_) => (StatusCode::NOT_FOUND, "UnknownAnnotator"),
            StoreError::CorruptLog { .. } | StoreError::Io { .. } => {
                (StatusCode::INTERNAL_SERVER_ERROR, "StorageError")
            }
        };
        Self::new(status, kind, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.kind, "message": self.message }))).into_response()
    }
}

type Shared = Arc<AnnotationStore>;

pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/media/{file}", get(media_clip))
        .route("/api/annotations", post(submit))
        .route("/api/agreement", get(agreement))
        .route("/api/export", get(export))
        .with_state(store)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, store: Shared) -> std::io::Result<()> {
    log::info!("annotation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store)).await
}

async fn next_task(State(store): State<Shared>, Query(q): Query<HashMap<String, String>>) -> Result<Response, ApiError> {
    let Some(annotator) = q.get("annotator").filter(|a| !a.is_empty()) else {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "ValidationError",
            "missing annotator query parameter",
        ));
    };
    Ok(match store.next_task(annotator)? {
        Some(task) => Json(task).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit(State(store): State<Shared>, body: Bytes) -> Result<Json<SubmitAck>, ApiError> {
    let ack = tokio::task::spawn_blocking(move || store.submit_json(&body))
        .await
        .map_err(ApiError::internal)??;
    Ok(Json(ack))
}

async fn agreement(State(store): State<Shared>) -> Json<AgreementSnapshot> {
    Json(store.agreement())
}

async fn export(State(store): State<Shared>) -> Response {
    ([(header::CONTENT_TYPE, "application/x-ndjson")], store.export()).into_response()
}

async fn media_clip(State(store): State<Shared>, Path(file): Path<String>, headers: HeaderMap) -> Result<Response, ApiError> {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, "UnknownMedia", format!("no media {file}"));
    let (id, kind) = media::parse_media_name(&file).ok_or_else(not_found)?;
    if store.manifest().utterance(id).is_none() {
        return Err(StoreError::UnknownUtterance(id.into()).into());
    }
    let id = id.to_string();
    let (bytes, content_type) = match kind {
        MediaKind::Wav => {
            let s = store.clone();
            let clip = tokio::task::spawn_blocking(move || media::audio_clip(s.manifest(), &id))
                .await
                .map_err(ApiError::internal)?
                .map_err(ApiError::internal)?;
            (clip.ok_or_else(not_found)?, "audio/wav")
        }
        MediaKind::Mp4 => {
            let (path, content_type) = media::video_file(store.manifest(), &id).ok_or_else(not_found)?;
            let bytes = tokio::fs::read(&path).await.map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
            (bytes, content_type)
        }
    };
    Ok(ranged(bytes, content_type, headers.get(header::RANGE).and_then(|h| h.to_str().ok())))
}

fn ranged(bytes: Vec<u8>, content_type: &'static str, range: Option<&str>) -> Response {
    let len = bytes.len() as u64;
    let mut response = match parse_range(range, len) {
        RangeRequest::Full => Response::new(Body::from(bytes)),
        RangeRequest::Partial(a, b) => {
            let mut r = Response::new(Body::from(bytes[a as usize..=b as usize].to_vec()));
            *r.status_mut() = StatusCode::PARTIAL_CONTENT;
            r.headers_mut().insert(
                header::CONTENT_RANGE,
                HeaderValue::from_str(&format!("bytes {a}-{b}/{len}")).expect("ascii"),
            );
            r
        }
        RangeRequest::Unsatisfiable => {
            let mut r = Response::new(Body::empty());
            *r.status_mut() = StatusCode::RANGE_NOT_SATISFIABLE;
            r.headers_mut().insert(
                header::CONTENT_RANGE,
                HeaderValue::from_str(&format!("bytes */{len}")).expect("ascii"),
            );
            return r;
        }
    };
    let h = response.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type));
    h.insert(header::ACCEPT_RANGES, HeaderValue::from_static("bytes"));
    response
}
