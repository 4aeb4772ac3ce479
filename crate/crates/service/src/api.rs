//! HTTP JSON API over [`Service`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use searchgym_core::router::{PlanKind, SearchRequest};
use searchgym_core::{Error, Violation};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::ops::Service;

pub const BIND_ENV: &str = "SEARCHGYM_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:7700";

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
    /// Plan that was running when an engine failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            violations: Vec::new(),
            plan: None,
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Violations(v) => Self {
                violations: v,
                ..Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
            },
            Error::InvalidHash(_) | Error::NonFiniteFloat(_) | Error::Infeasible(_) | Error::MissingInput(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
            }
            Error::NotFound(_) | Error::UnknownVectorSet(_) => Self::new(StatusCode::NOT_FOUND, "not_found", message),
            Error::Engine { plan, source } => {
                let mut inner = ApiError::from(*source);
                if inner.status.is_server_error() {
                    inner.code = "engine";
                    inner.message = message;
                }
                inner.plan = Some(plan);
                inner
            }
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs blocking store or engine work off the async executor.
async fn blocking<T, F>(svc: &Arc<Service>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> searchgym_core::Result<T> + Send + 'static,
{
    let svc = svc.clone();
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map(Json)
        .map_err(ApiError::from)
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::from(Error::Violations(vec![Violation::Malformed(e.to_string())])))
}

/// Search body: a SearchRequest, optionally with `"plan"` to force a pathway.
struct SearchBody {
    request: SearchRequest,
    plan: Option<PlanKind>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SwapBody {
    vectorset: String,
}

async fn put_config(State(svc): State<Arc<Service>>, body: Bytes) -> ApiResult<serde_json::Value> {
    blocking(&svc, move |s| s.put_config(&body).map(|h| json!({ "hash": h }))).await
}

async fn get_config(State(svc): State<Arc<Service>>, Path(hash): Path<String>) -> ApiResult<serde_json::Value> {
    blocking(&svc, move |s| Ok(serde_json::to_value(s.get_config(&hash)?)?)).await
}

async fn activate(State(svc): State<Arc<Service>>, Path(hash): Path<String>) -> ApiResult<serde_json::Value> {
    blocking(&svc, move |s| Ok(serde_json::to_value(s.activate(&hash)?)?)).await
}

async fn search(State(svc): State<Arc<Service>>, Path(hash): Path<String>, body: Bytes) -> ApiResult<serde_json::Value> {
    // "plan" is removed first so the request itself is parsed strictly.
    let mut raw: serde_json::Value = parse_body(&body)?;
    let plan = raw.as_object_mut().and_then(|o| o.remove("plan"));
    let body = SearchBody {
        request: serde_json::from_value(raw)
            .map_err(|e| ApiError::from(Error::Violations(vec![Violation::Malformed(e.to_string())])))?,
        plan: plan
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| ApiError::from(Error::Violations(vec![Violation::Malformed(e.to_string())])))?,
    };
    blocking(&svc, move |s| Ok(serde_json::to_value(s.search(&hash, &body.request, body.plan)?)?)).await
}

async fn swap(State(svc): State<Arc<Service>>, Path(hash): Path<String>, body: Bytes) -> ApiResult<serde_json::Value> {
    let SwapBody { vectorset } = parse_body(&body)?;
    blocking(&svc, move |s| Ok(serde_json::to_value(s.swap(&hash, &vectorset)?)?)).await
}

async fn apps(State(svc): State<Arc<Service>>) -> ApiResult<serde_json::Value> {
    blocking(&svc, |s| Ok(serde_json::to_value(s.apps()?)?)).await
}

async fn metrics(State(svc): State<Arc<Service>>) -> Json<serde_json::Value> {
    Json(serde_json::to_value(svc.metrics()).unwrap_or_default())
}

pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/configs", post(put_config))
        .route("/configs/{hash}", get(get_config))
        .route("/apps", get(apps))
        .route("/apps/{hash}/activate", post(activate))
        .route("/apps/{hash}/search", post(search))
        .route("/apps/{hash}/swap", post(swap))
        .route("/metrics", get(metrics))
        .with_state(svc)
}

/// Serves until ctrl-c.
pub async fn serve(svc: Arc<Service>, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(svc))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
