//! HTTP routes over a [`Session`].

use std::future::Future;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use linkforge_core::annotate::ExportFilter;
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;

use crate::error::ServiceError;
use crate::session::{DecisionRequest, Session};

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::MissingToken => StatusCode::UNAUTHORIZED,
            ServiceError::UnknownAnnotator(_) => StatusCode::FORBIDDEN,
            ServiceError::UnknownCandidate(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Storage { .. } => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Corrupt(_) | ServiceError::Core(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        let body = Json(json!({
            "error": self.to_string(),
            "retryable": self.is_retryable(),
        }));
        let mut resp = (status, body).into_response();
        if self.is_retryable() {
            resp.headers_mut()
                .insert(header::RETRY_AFTER, header::HeaderValue::from_static("1"));
        }
        resp
    }
}

type AppState = Arc<Session>;

#[derive(Deserialize)]
struct TaskQuery {
    annotator: Option<String>,
}

#[derive(Deserialize)]
struct ExportQuery {
    annotator: Option<String>,
    pair_id: Option<String>,
}

async fn health(State(s): State<AppState>) -> impl IntoResponse {
    let snap = s.snapshot();
    Json(json!({
        "status": "ok",
        "bundles": s.bundles().len(),
        "live_decisions": snap.live.len(),
        "log_len": snap.log_len,
    }))
}

async fn pairs(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.pairs())
}

async fn next_task(State(s): State<AppState>, Query(q): Query<TaskQuery>) -> Result<Response, ServiceError> {
    s.authorize(q.annotator.as_deref())?;
    let task = s.next_task(q.annotator.as_deref().unwrap_or_default())?;
    Ok(Json(task).into_response())
}

async fn submit(
    State(s): State<AppState>,
    body: Result<Json<DecisionRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ServiceError> {
    let Json(req) = body.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let ack = tokio::task::spawn_blocking(move || s.submit(req))
        .await
        .map_err(|e| ServiceError::Corrupt(format!("writer task failed: {e}")))??;
    Ok(Json(ack).into_response())
}

async fn export(State(s): State<AppState>, Query(q): Query<ExportQuery>) -> Result<Response, ServiceError> {
    let filter = ExportFilter {
        annotator: q.annotator,
        pair_id: q.pair_id,
    };
    let mut body = Vec::new();
    linkforge_core::annotate::write_records(&s.export(&filter), &mut body)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

pub fn router(session: Arc<Session>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/pairs", get(pairs))
        .route("/tasks/next", get(next_task))
        .route("/decisions", post(submit))
        .route("/export", get(export))
        .with_state(session)
}

/// Serves until `shutdown` resolves, then compacts the log.
pub async fn serve(
    listener: TcpListener,
    session: Arc<Session>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        log::info!("listening on http://{addr}");
    }
    axum::serve(listener, router(session.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    if let Err(e) = tokio::task::spawn_blocking(move || session.compact()).await.unwrap_or(Ok(())) {
        log::warn!("compaction on shutdown failed: {e}");
    }
    Ok(())
}
