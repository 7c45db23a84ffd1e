//! HTTP front end for a trained medentropy model.
//!
//! The API is stateless: clients resend the whole procedure prefix with
//! every call. The model is loaded once and shared read-only between
//! request handlers.

pub mod api;
mod engine;

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::ServeDir;

pub use engine::{Engine, DEFAULT_CANDIDATES};

use api::{ErrorBody, ErrorResponse, Health, PredictRequest, WhatIfRequest, SCHEMA_VERSION};

/// Default and maximum `limit` of `/vocab/procedures`.
pub const DEFAULT_VOCAB_LIMIT: usize = 20;
pub const MAX_VOCAB_LIMIT: usize = 1000;

/// Shared handler state. `engine` is `None` until a model is loaded.
#[derive(Clone, Debug, Default)]
pub struct AppState {
    engine: Option<Arc<Engine>>,
}

impl AppState {
    pub fn new(engine: Engine) -> Self {
        AppState {
            engine: Some(Arc::new(engine)),
        }
    }

    /// State without a model: every model endpoint answers 503.
    pub fn without_model() -> Self {
        AppState::default()
    }

    fn engine(&self) -> Result<Arc<Engine>, ApiError> {
        self.engine.clone().ok_or_else(|| ApiError {
            status: StatusCode::SERVICE_UNAVAILABLE,
            code: "model_not_loaded",
            message: "no model is loaded".into(),
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code,
            message: message.into(),
        }
    }
}

impl From<medentropy::Error> for ApiError {
    fn from(e: medentropy::Error) -> Self {
        let status = match e {
            medentropy::Error::InvalidCode(_) | medentropy::Error::Invalid(_) => {
                StatusCode::BAD_REQUEST
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            code: e.code(),
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request("bad_request", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request("bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorResponse {
            schema_version: SCHEMA_VERSION,
            error: ErrorBody {
                code: self.code.to_string(),
                message: self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        schema_version: SCHEMA_VERSION,
    })
}

async fn model_info(State(state): State<AppState>) -> ApiResult<api::ModelInfo> {
    Ok(Json(state.engine()?.model_info()))
}

#[derive(Debug, Deserialize)]
struct VocabQuery {
    #[serde(default)]
    q: String,
    limit: Option<usize>,
}

async fn vocab_procedures(
    State(state): State<AppState>,
    query: Result<Query<VocabQuery>, QueryRejection>,
) -> ApiResult<api::VocabResponse> {
    let engine = state.engine()?;
    let Query(query) = query?;
    let limit = query
        .limit
        .unwrap_or(DEFAULT_VOCAB_LIMIT)
        .min(MAX_VOCAB_LIMIT);
    Ok(Json(engine.search_procedures(&query.q, limit)))
}

/// Runs model inference off the async executor.
async fn blocking<T, F>(engine: Arc<Engine>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> medentropy::Result<T> + Send + 'static,
{
    let out = tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: e.to_string(),
        })??;
    Ok(Json(out))
}

async fn predict(
    State(state): State<AppState>,
    body: Result<Json<PredictRequest>, JsonRejection>,
) -> ApiResult<api::PredictResponse> {
    let engine = state.engine()?;
    let Json(req) = body?;
    blocking(engine, move |e| e.predict(&req)).await
}

async fn whatif(
    State(state): State<AppState>,
    body: Result<Json<WhatIfRequest>, JsonRejection>,
) -> ApiResult<api::WhatIfResponse> {
    let engine = state.engine()?;
    let Json(req) = body?;
    blocking(engine, move |e| e.whatif(&req)).await
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        code: "not_found",
        message: "no such endpoint".into(),
    }
}

async fn method_not_allowed() -> ApiError {
    ApiError {
        status: StatusCode::METHOD_NOT_ALLOWED,
        code: "method_not_allowed",
        message: "method not allowed for this endpoint".into(),
    }
}

/// Builds the router. When `ui_dir` is given its files are served under
/// `/ui/`.
pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/model/info", get(model_info))
        .route("/vocab/procedures", get(vocab_procedures))
        .route("/predict", post(predict))
        .route("/whatif", post(whatif))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state);
    if let Some(dir) = ui_dir {
        app = app.nest_service(
            "/ui",
            ServeDir::new(dir).append_index_html_on_directories(true),
        );
    }
    app
}

/// Serves `app` on `listener` until `shutdown` resolves, then finishes
/// in-flight requests.
pub async fn serve<F>(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: F,
) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    if let Ok(addr) = listener.local_addr() {
        log::info!("listening on http://{addr}");
    }
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = terminate => {},
    }
}
