//! HTTP surface of the search service.
//!
//! * `GET /v1/search?q=&lang=&k=&page=&exclude=`
//! * `POST /v1/flag` with a JSON [`FlagRequest`]
//! * `GET /v1/health`
//!
//! Validation failures answer 400 with `{"error": "..."}`.

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tokio::net::TcpListener;

use crate::service::{FlagRequest, SearchRequest, SearchService, ServiceError};

fn error(status: StatusCode, msg: impl std::fmt::Display) -> Response {
    (status, Json(json!({ "error": msg.to_string() }))).into_response()
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match self {
            ServiceError::Validation(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            log::error!("{self}");
        }
        error(status, self)
    }
}

pub fn router(service: Arc<SearchService>) -> Router {
    Router::new()
        .route("/v1/search", get(search))
        .route("/v1/flag", post(flag))
        .route("/v1/health", get(health))
        .with_state(service)
}

async fn search(
    State(svc): State<Arc<SearchService>>,
    query: Result<Query<SearchRequest>, QueryRejection>,
) -> Response {
    let Query(req) = match query {
        Ok(q) => q,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    // scoring is CPU-bound; keep it off the async workers
    match tokio::task::spawn_blocking(move || svc.search(&req)).await {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn flag(State(svc): State<Arc<SearchService>>, body: Result<Json<FlagRequest>, JsonRejection>) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    match tokio::task::spawn_blocking(move || svc.submit_flag(req)).await {
        Ok(Ok(receipt)) => (StatusCode::CREATED, Json(receipt)).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn health(State(svc): State<Arc<SearchService>>) -> Response {
    Json(svc.health()).into_response()
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve<F>(listener: TcpListener, service: Arc<SearchService>, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(service))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Resolves on SIGINT or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutdown requested");
}
