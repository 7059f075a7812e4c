//! JSON-over-HTTP front end to the session service.

use std::sync::Arc;

use adversa_core::gateway::{ActionRequest, CreateSessionRequest, SessionManager};
use adversa_core::Error;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(Error::Validation(e.body_text()))
    }
}

pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::Validation(_) | Error::InvalidInput(_) | Error::ConstraintViolation(_) => StatusCode::BAD_REQUEST,
        Error::NotFound(_) => StatusCode::NOT_FOUND,
        Error::Conflict(_) => StatusCode::CONFLICT,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (status_for(&self.0), Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn create(
    State(m): State<Arc<SessionManager>>,
    body: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(req) = body?;
    Ok((StatusCode::CREATED, Json(m.create(&req)?)))
}

async fn action(
    State(m): State<Arc<SessionManager>>,
    Path(id): Path<String>,
    body: Result<Json<ActionRequest>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(req) = body?;
    Ok(Json(m.advance(&id, &req)?))
}

async fn show(State(m): State<Arc<SessionManager>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(m.get(&id)?))
}

async fn transcript(State(m): State<Arc<SessionManager>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], m.transcript(&id)?))
}

async fn remove(State(m): State<Arc<SessionManager>>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    m.delete(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn health() -> &'static str {
    "ok"
}

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(show).delete(remove))
        .route("/sessions/{id}/action", post(action))
        .route("/sessions/{id}/log", get(transcript))
        .with_state(manager)
}
