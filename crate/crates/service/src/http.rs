//! REST surface over [`Controller`].
//!
//! Handlers run controller calls on the blocking pool, since a remote
//! backend performs synchronous network I/O.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use prospectus_core::Document;
use serde::Serialize;
use serde_json::json;

use crate::controller::{Controller, ServiceError};
use crate::store::FeedbackRecord;

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    violations: Vec<String>,
}

pub struct ApiError(StatusCode, ErrorBody);

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>, violations: Vec<String>) -> Self {
        ApiError(status, ErrorBody { error: error.into(), violations })
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Invalid(v) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid request", v),
            ServiceError::NotFound(id) => {
                ApiError::new(StatusCode::NOT_FOUND, format!("document {id:?} not found"), vec![])
            }
            ServiceError::Store(e) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), vec![]),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed request body", vec![e.body_text()])
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type Shared = Arc<Controller>;

async fn blocking<T, F>(controller: Shared, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Controller) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&controller))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), vec![]))?
        .map_err(ApiError::from)
}

async fn predict(State(c): State<Shared>, body: Result<Json<Document>, JsonRejection>) -> Result<Response, ApiError> {
    let Json(doc) = body?;
    let resp = blocking(c, move |c| c.predict(doc)).await?;
    Ok(Json(resp).into_response())
}

async fn decide(State(c): State<Shared>, body: Result<Json<Document>, JsonRejection>) -> Result<Response, ApiError> {
    let Json(doc) = body?;
    let resp = blocking(c, move |c| c.decide(&doc)).await?;
    Ok(Json(resp).into_response())
}

async fn feedback(
    State(c): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<FeedbackRecord>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(record) = body?;
    if record.document_id != id {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid request",
            vec![format!("record document_id {:?} does not match path id {id:?}", record.document_id)],
        ));
    }
    let ack = blocking(c, move |c| c.submit_feedback(record)).await?;
    Ok(Json(ack).into_response())
}

async fn document(State(c): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let stored = blocking(c, move |c| c.get(&id)).await?;
    Ok(Json(stored).into_response())
}

async fn export(State(c): State<Shared>) -> Result<Response, ApiError> {
    let export = blocking(c, |c| c.export_training()).await?;
    let mut resp = export.jsonl.into_response();
    resp.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static("application/x-ndjson"));
    if !export.skipped.is_empty() {
        let ids: Vec<&str> = export.skipped.iter().map(|(id, _)| id.as_str()).collect();
        if let Ok(v) = HeaderValue::from_str(&ids.join(",")) {
            resp.headers_mut().insert("x-skipped-documents", v);
        }
    }
    Ok(resp)
}

async fn health(State(c): State<Shared>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "model_version": c.model_version,
        "config_version": c.config.version,
    }))
}

pub fn router(controller: Arc<Controller>) -> Router {
    Router::new()
        .route("/v1/predict", post(predict))
        .route("/v1/decide", post(decide))
        .route("/v1/documents/{id}/feedback", post(feedback))
        .route("/v1/documents/{id}", get(document))
        .route("/v1/export/training", get(export))
        .route("/health", get(health))
        .with_state(controller)
}
