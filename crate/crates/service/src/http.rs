use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use futures::StreamExt;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::export::{ExportError, ExportFormat};
use crate::transcript::{EditOp, TranscriptError};
use crate::{Service, ServiceError};

pub const MAX_UPLOAD_BYTES: usize = 1 << 30;

impl ServiceError {
    fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) | ServiceError::Transcript(TranscriptError::SegmentNotFound(_)) => StatusCode::NOT_FOUND,
            ServiceError::EmptyUpload | ServiceError::Export(ExportError::UnsupportedFormat(_)) => StatusCode::BAD_REQUEST,
            ServiceError::NotReady(_) | ServiceError::Transcript(TranscriptError::ConflictingRevision { .. }) => {
                StatusCode::CONFLICT
            }
            ServiceError::Transcript(TranscriptError::InvalidEdit(_)) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Export(ExportError::NoEdits) => StatusCode::NO_CONTENT,
            ServiceError::QueueClosed => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) | ServiceError::Transcript(TranscriptError::SegmentNotFound(_)) => "NotFound",
            ServiceError::EmptyUpload => "EmptyUpload",
            ServiceError::NotReady(_) => "NotReady",
            ServiceError::QueueClosed => "QueueClosed",
            ServiceError::Transcript(TranscriptError::InvalidEdit(_)) => "InvalidEdit",
            ServiceError::Transcript(TranscriptError::ConflictingRevision { .. }) => "ConflictingRevision",
            ServiceError::Export(ExportError::UnsupportedFormat(_)) => "UnsupportedFormat",
            ServiceError::Export(ExportError::NoEdits) => "NoEdits",
            ServiceError::Storage(_) => "StorageFailure",
        }
    }
}

/// Error body: `{"error": <kind>, "message": <text>}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status == StatusCode::NO_CONTENT {
            return status.into_response();
        }
        if status.is_server_error() {
            tracing::error!("{self}");
        }
        (status, Json(ErrorBody { error: self.kind().into(), message: self.to_string() })).into_response()
    }
}

fn bad_request(kind: &str, message: impl Into<String>) -> Response {
    (StatusCode::BAD_REQUEST, Json(ErrorBody { error: kind.into(), message: message.into() })).into_response()
}

fn parse_id(raw: &str) -> Result<Uuid, ServiceError> {
    // Malformed ids name no job.
    raw.parse().map_err(|_| ServiceError::NotFound(Uuid::nil()))
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/jobs", post(create_job))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/events", get(job_events))
        .route("/jobs/{id}/transcript", get(get_transcript))
        .route("/jobs/{id}/segments/{seg_id}", patch(edit_segment))
        .route("/jobs/{id}/export", get(export))
        .route("/jobs/{id}/corrections", get(corrections))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(service)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: Uuid,
}

/// Takes the first multipart field carrying data; its file name, if any,
/// becomes the media name.
async fn create_job(State(svc): State<Arc<Service>>, mut form: Multipart) -> Response {
    loop {
        let field = match form.next_field().await {
            Ok(Some(f)) => f,
            Ok(None) => return ServiceError::EmptyUpload.into_response(),
            Err(e) => return bad_request("BadMultipart", e.body_text()),
        };
        let name = field.file_name().or(field.name()).unwrap_or("upload").to_string();
        let bytes = match field.bytes().await {
            Ok(b) => b,
            Err(e) => return bad_request("BadMultipart", e.body_text()),
        };
        if bytes.is_empty() {
            continue;
        }
        let svc = svc.clone();
        let res = tokio::task::spawn_blocking(move || svc.create_job(&name, &bytes)).await;
        return match res {
            Ok(Ok(id)) => (StatusCode::CREATED, Json(Created { id })).into_response(),
            Ok(Err(e)) => e.into_response(),
            Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
        };
    }
}

async fn get_job(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(svc.job(parse_id(&id)?)?).into_response())
}

async fn get_transcript(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(svc.transcript(parse_id(&id)?)?).into_response())
}

async fn job_events(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let stream = svc.events(parse_id(&id)?)?;
    let sse = stream.map(|e| {
        let ev = Event::default().event(e.state.as_str()).json_data(&e).expect("event serialises");
        Ok::<_, Infallible>(ev)
    });
    Ok(Sse::new(sse).keep_alive(KeepAlive::default()).into_response())
}

async fn edit_segment(
    State(svc): State<Arc<Service>>,
    Path((id, seg_id)): Path<(String, u32)>,
    body: Result<Json<EditOp>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ServiceError> {
    let id = parse_id(&id)?;
    let Json(op) = match body {
        Ok(b) => b,
        Err(e) => {
            return Err(ServiceError::Transcript(TranscriptError::InvalidEdit(e.body_text())));
        }
    };
    let svc2 = svc.clone();
    let doc = tokio::task::spawn_blocking(move || svc2.edit(id, seg_id, &op))
        .await
        .map_err(|e| ServiceError::Storage(crate::store::StoreError::StorageFailure(std::io::Error::other(e))))??;
    Ok(Json(doc).into_response())
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ServiceError> {
    let id = parse_id(&id)?;
    let format: ExportFormat = q.format.as_deref().unwrap_or("srt").parse()?;
    let bytes = svc.export(id, format)?;
    let disposition = format!("attachment; filename=\"{id}.{}\"", format.extension());
    Ok(([(header::CONTENT_TYPE, format.content_type().to_string()), (header::CONTENT_DISPOSITION, disposition)], bytes)
        .into_response())
}

/// Edited segments as a JSON-lines training manifest; 204 when nothing has
/// been edited.
async fn corrections(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let manifest = svc.corrections(parse_id(&id)?)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], manifest.to_jsonl()).into_response())
}
