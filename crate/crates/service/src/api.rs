//! JSON endpoints over a [`Session`].

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use itar_core::itar::TopicLabel;
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use crate::session::{Session, SessionError};

#[derive(Clone, Default)]
pub struct AppState {
    pub session: Option<Arc<Session>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelRequest {
    pub topic_id: usize,
    pub label: TopicLabel,
}

#[derive(Debug)]
pub enum ApiError {
    NoSession,
    Session(SessionError),
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError::Session(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match self {
            ApiError::NoSession => (StatusCode::NOT_FOUND, "no session".to_owned()),
            ApiError::Session(e) => {
                let status = match e {
                    SessionError::WrongPhase(_) => StatusCode::CONFLICT,
                    SessionError::UnknownTopic(_) => StatusCode::NOT_FOUND,
                    SessionError::FixedTopic(_) => StatusCode::BAD_REQUEST,
                    _ => StatusCode::INTERNAL_SERVER_ERROR,
                };
                (status, e.to_string())
            }
        };
        (status, Json(serde_json::json!({ "error": message }))).into_response()
    }
}

fn session(state: &AppState) -> Result<&Arc<Session>, ApiError> {
    state.session.as_ref().ok_or(ApiError::NoSession)
}

async fn get_session(State(state): State<AppState>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(session(&state)?.state()))
}

async fn get_history(State(state): State<AppState>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(session(&state)?.history()))
}

async fn get_topic(State(state): State<AppState>, Path(id): Path<usize>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(session(&state)?.topic(id)?))
}

async fn post_labels(
    State(state): State<AppState>,
    Json(req): Json<LabelRequest>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(session(&state)?.set_label(req.topic_id, req.label)?))
}

async fn post_iterate(State(state): State<AppState>) -> Result<impl IntoResponse, ApiError> {
    let ticket = session(&state)?.iterate()?;
    Ok((StatusCode::ACCEPTED, Json(ticket)))
}

/// All endpoints, with `static_dir` (the UI bundle) served for other paths.
pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/session", get(get_session))
        .route("/history", get(get_history))
        .route("/topics/{id}", get(get_topic))
        .route("/labels", post(post_labels))
        .route("/iterate", post(post_iterate))
        .with_state(state);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(CorsLayer::permissive())
}
