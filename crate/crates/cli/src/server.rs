//! HTTP wiring for the read-only service.

use std::collections::HashMap;
use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use salmon_core::service::{render, PosteriorStore, ServiceError, ServiceResult};
use salmon_core::{Error, Result};
use tokio::sync::Semaphore;

/// Concurrent projection jobs; further requests wait for a slot.
const PROJECTION_WORKERS: usize = 4;

#[derive(Clone)]
struct AppState {
    store: Arc<PosteriorStore>,
    workers: Arc<Semaphore>,
}

fn json_response(status: StatusCode, text: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], text).into_response()
}

fn respond(r: ServiceResult) -> Response {
    match r {
        Ok(v) => json_response(StatusCode::OK, render(&v)),
        Err(e) => error_response(e),
    }
}

fn error_response(e: ServiceError) -> Response {
    let status = StatusCode::from_u16(e.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    json_response(status, render(&e.body()))
}

/// Runs a CPU-bound handler off the async workers, bounded by the pool.
async fn blocking<F>(state: &AppState, f: F) -> Response
where
    F: FnOnce(&PosteriorStore) -> ServiceResult + Send + 'static,
{
    let Ok(_permit) = state.workers.clone().acquire_owned().await else {
        return error_response(Error::Internal("worker pool closed".into()).into());
    };
    let store = state.store.clone();
    match tokio::task::spawn_blocking(move || f(&store)).await {
        Ok(r) => respond(r),
        Err(e) => error_response(Error::Internal(format!("projection task: {e}")).into()),
    }
}

async fn health(State(s): State<AppState>) -> Response {
    respond(Ok(s.store.health()))
}

async fn stocks(State(s): State<AppState>) -> Response {
    respond(Ok(s.store.stocks()))
}

async fn summary(State(s): State<AppState>) -> Response {
    respond(Ok(s.store.summary()))
}

async fn smolts(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Response {
    respond(s.store.smolts(q.get("stock").map(String::as_str), q.get("quantiles").map(String::as_str)))
}

async fn project(State(s): State<AppState>, body: Bytes) -> Response {
    let st = s.clone();
    blocking(&st, move |store| store.project_body(&body)).await
}

async fn compare(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Response {
    let ids = q.get("ids").cloned();
    let st = s.clone();
    blocking(&st, move |store| store.compare(ids.as_deref())).await
}

async fn not_found() -> Response {
    error_response(ServiceError::not_found("no such route", "path"))
}

pub fn router(store: Arc<PosteriorStore>) -> Router {
    let state = AppState {
        store,
        workers: Arc::new(Semaphore::new(PROJECTION_WORKERS)),
    };
    Router::new()
        .route("/health", get(health))
        .route("/stocks", get(stocks))
        .route("/posterior/summary", get(summary))
        .route("/posterior/smolts", get(smolts))
        .route("/project", post(project))
        .route("/policies/compare", get(compare))
        .fallback(not_found)
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    store: Arc<PosteriorStore>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<()> {
    axum::serve(listener, router(store))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| Error::Internal(format!("server: {e}")))
}

/// Resolves on Ctrl-C or, on Unix, SIGTERM.
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
}
