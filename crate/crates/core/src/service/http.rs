use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;

use super::{Engine, UpdateMode};
use crate::cache::HistoricalRecord;
use crate::error::Error;

#[derive(Deserialize)]
struct TranslateRequest {
    query: String,
}

#[derive(Deserialize)]
struct UpdateRequest {
    #[serde(default)]
    records: Vec<HistoricalRecord>,
    #[serde(default)]
    mode: Option<UpdateMode>,
}

struct ApiError(Error);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0 {
            Error::InvalidInput(_) | Error::InvalidDsl(_) | Error::Config { .. } => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let stage = match &self.0 {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        };
        (status, Json(json!({ "error": self.0.to_string(), "stage": stage }))).into_response()
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> crate::Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(Error::InvalidInput(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

async fn translate(State(engine): State<Arc<Engine>>, Json(req): Json<TranslateRequest>) -> Result<Response, ApiError> {
    let resp = blocking(move || engine.translate(&req.query)).await?;
    Ok(Json(resp).into_response())
}

async fn update(State(engine): State<Arc<Engine>>, Json(req): Json<UpdateRequest>) -> Result<Response, ApiError> {
    let mode = req.mode.unwrap_or(UpdateMode::Auto);
    let out = blocking(move || engine.update(req.records, mode)).await?;
    Ok(Json(out).into_response())
}

async fn rebuild(State(engine): State<Arc<Engine>>, body: Option<Json<UpdateRequest>>) -> Result<Response, ApiError> {
    let records = body.map(|Json(b)| b.records).unwrap_or_default();
    let out = blocking(move || engine.update(records, UpdateMode::Rebuild)).await?;
    Ok(Json(out).into_response())
}

async fn stats(State(engine): State<Arc<Engine>>) -> Response {
    Json(engine.stats()).into_response()
}

async fn metrics(State(engine): State<Arc<Engine>>) -> Response {
    Json(engine.metrics().snapshot()).into_response()
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/translate", post(translate))
        .route("/cache/update", post(update))
        .route("/cache/rebuild", post(rebuild))
        .route("/cache/stats", get(stats))
        .route("/metrics", get(metrics))
        .with_state(engine)
}

/// Serves until ctrl-c.
pub async fn serve(listener: TcpListener, engine: Arc<Engine>) -> std::io::Result<()> {
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
