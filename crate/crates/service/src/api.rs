//! Operator console API. Every route except `/api/health` requires
//! `Authorization: Bearer <token>`; errors are `{"error": message}`.

use crate::service::Service;
use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use std::sync::{Arc, Mutex, MutexGuard};
use supportbot_core::pipeline::{PipelineError, ResolveAction};

pub type Shared = Arc<Mutex<Service>>;

#[derive(Clone)]
struct AppState {
    service: Shared,
    token: Arc<str>,
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::UnknownReview(_) | PipelineError::UnknownPost(_) => StatusCode::NOT_FOUND,
            PipelineError::ReviewClosed(_) => StatusCode::CONFLICT,
            PipelineError::EmptyText => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

fn lock(service: &Shared) -> MutexGuard<'_, Service> {
    service.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

pub fn router(service: Shared, token: &str) -> Router {
    let state = AppState { service, token: token.into() };
    let protected = Router::new()
        .route("/api/pending", get(pending))
        .route("/api/pending/{id}/resolve", post(resolve))
        .route("/api/metrics", get(metrics))
        .route("/api/posts/{id}", get(post_view))
        .route_layer(middleware::from_fn_with_state(state.clone(), auth));
    Router::new().route("/api/health", get(health)).merge(protected).with_state(state)
}

async fn auth(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let presented = req.headers().get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()).and_then(|v| v.strip_prefix("Bearer "));
    if presented == Some(&*state.token) {
        next.run(req).await
    } else {
        ApiError(StatusCode::UNAUTHORIZED, "missing or wrong bearer token".into()).into_response()
    }
}

async fn health(State(state): State<AppState>) -> impl IntoResponse {
    Json(lock(&state.service).health())
}

async fn pending(State(state): State<AppState>) -> impl IntoResponse {
    Json(lock(&state.service).pending())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ResolveBody {
    action: String,
    #[serde(default)]
    text: Option<String>,
    operator_id: String,
}

fn parse_resolve(body: &[u8]) -> Result<(ResolveAction, String), ApiError> {
    let unprocessable = |m: String| ApiError(StatusCode::UNPROCESSABLE_ENTITY, m);
    let b: ResolveBody = serde_json::from_slice(body).map_err(|e| unprocessable(e.to_string()))?;
    if b.operator_id.trim().is_empty() {
        return Err(unprocessable("operator_id is empty".into()));
    }
    let action = match (b.action.as_str(), b.text) {
        ("approve", None) => ResolveAction::Approve,
        ("replace", Some(t)) => ResolveAction::Replace(t),
        ("approve", Some(_)) => return Err(unprocessable("approve takes no text".into())),
        ("replace", None) => return Err(unprocessable("replace needs text".into())),
        (other, _) => return Err(unprocessable(format!("unknown action {other:?}"))),
    };
    Ok((action, b.operator_id))
}

async fn resolve(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let (action, operator) = parse_resolve(&body)?;
    let service = state.service.clone();
    let review = tokio::task::spawn_blocking(move || lock(&service).resolve(&id, action, &operator))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(review).into_response())
}

async fn metrics(State(state): State<AppState>) -> Result<Response, ApiError> {
    let report = lock(&state.service).metrics().map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(report).into_response())
}

async fn post_view(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let view = lock(&state.service).post(&id).ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown post {id}")))?;
    Ok(Json(view).into_response())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_body_shapes() {
        assert!(matches!(parse_resolve(br#"{"action":"approve","operator_id":"op"}"#), Ok((ResolveAction::Approve, _))));
        assert!(matches!(
            parse_resolve(br#"{"action":"replace","text":"hi","operator_id":"op"}"#),
            Ok((ResolveAction::Replace(t), _)) if t == "hi"
        ));
        for bad in [
            &br#"{"action":"replace","operator_id":"op"}"#[..],
            br#"{"action":"approve","text":"x","operator_id":"op"}"#,
            br#"{"action":"delete","operator_id":"op"}"#,
            br#"{"action":"approve"}"#,
            br#"{"action":"approve","operator_id":" "}"#,
            br#"not json"#,
        ] {
            assert_eq!(parse_resolve(bad).err().map(|e| e.0), Some(StatusCode::UNPROCESSABLE_ENTITY));
        }
    }
}
