use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::header::{CACHE_CONTROL, CONTENT_TYPE};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use spotex_core::fingerprint::parse_observations;
use spotex_core::{DevicePoint, MinuteOfDay, PageMode, RuleError};

use crate::session::{SessionId, SESSION_HEADER};
use crate::state::AppState;

const JAVASCRIPT: &str = "application/javascript; charset=utf-8";
const JSON_TYPE: &str = "application/json";
const HTML: &str = "text/html; charset=utf-8";
const TEXT: &str = "text/plain; charset=utf-8";

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("callback must be a JavaScript identifier")]
    BadCallback,
    #[error("missing or malformed session token")]
    BadSession,
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    WrongMode(&'static str),
    #[error("rules rejected: {0}")]
    InvalidRules(RuleError),
    #[error("could not persist rules: {0}")]
    Persist(std::io::Error),
    #[error("{0}")]
    NotFound(&'static str),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::BadCallback | ApiError::BadSession | ApiError::BadRequest(_) => {
                StatusCode::BAD_REQUEST
            }
            ApiError::WrongMode(_) => StatusCode::CONFLICT,
            ApiError::InvalidRules(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Persist(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = match &self {
            ApiError::InvalidRules(RuleError::Parse {
                line,
                column,
                message,
            }) => json!({
                "error": "parse",
                "message": message,
                "line": line,
                "column": column,
            }),
            ApiError::InvalidRules(RuleError::Validation(e)) => json!({
                "error": "validation",
                "message": e.to_string(),
            }),
            other => json!({ "error": other.to_string() }),
        };
        if self.status().is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (self.status(), Json(body)).into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/getNetworks", get(get_networks))
        .route("/fingerprint", post(post_fingerprint))
        .route("/sim/move", post(sim_move))
        .route("/evaluate", get(evaluate))
        .route("/page", get(page))
        .route("/rules", get(get_rules).put(put_rules))
        .route("/venue", get(venue))
        .route("/shim.js", get(shim))
        .with_state(state)
}

#[derive(Debug, Default, Deserialize)]
struct Params {
    session: Option<String>,
    callback: Option<String>,
    now: Option<String>,
    mode: Option<String>,
}

impl Params {
    /// Query parameter first, then header. A malformed token counts as no
    /// session.
    fn session(&self, headers: &HeaderMap) -> Option<SessionId> {
        self.session
            .as_deref()
            .or_else(|| headers.get(SESSION_HEADER).and_then(|v| v.to_str().ok()))
            .and_then(|s| s.parse().ok())
    }

    fn required_session(&self, headers: &HeaderMap) -> Result<SessionId, ApiError> {
        self.session(headers).ok_or(ApiError::BadSession)
    }
}

pub fn is_js_identifier(s: &str) -> bool {
    let mut bytes = s.bytes();
    matches!(bytes.next(), Some(b) if b.is_ascii_alphabetic() || b == b'_' || b == b'$')
        && bytes.all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'$')
}

async fn get_networks(
    State(app): State<Arc<AppState>>,
    Query(params): Query<Params>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    if params
        .callback
        .as_deref()
        .is_some_and(|cb| !is_js_identifier(cb))
    {
        return Err(ApiError::BadCallback);
    }
    let json = app
        .fingerprint(params.session(&headers).as_ref())
        .to_canonical_json();
    let response = match params.callback {
        Some(cb) => (
            [(CONTENT_TYPE, JAVASCRIPT), (CACHE_CONTROL, "no-store")],
            format!("{cb}({json});"),
        )
            .into_response(),
        None => (
            [(CONTENT_TYPE, JSON_TYPE), (CACHE_CONTROL, "no-store")],
            json,
        )
            .into_response(),
    };
    Ok(response)
}

async fn post_fingerprint(
    State(app): State<Arc<AppState>>,
    Query(params): Query<Params>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ApiError> {
    let id = params.required_session(&headers)?;
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let observations =
        parse_observations(text, app.now_ms()).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let merged = app.push(&id, observations)?;
    Ok(Json(json!({ "merged": merged })))
}

async fn sim_move(
    State(app): State<Arc<AppState>>,
    Query(params): Query<Params>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let id = params.required_session(&headers)?;
    let point: DevicePoint = serde_json::from_slice(&body)
        .map_err(|e| ApiError::BadRequest(format!("malformed point: {e}")))?;
    let fp = app.move_to(&id, point)?;
    Ok(([(CONTENT_TYPE, JSON_TYPE)], fp.to_canonical_json()).into_response())
}

async fn evaluate(
    State(app): State<Arc<AppState>>,
    Query(params): Query<Params>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let now = params
        .now
        .as_deref()
        .map(|s| s.parse::<MinuteOfDay>())
        .transpose()
        .map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let result = app.evaluate(params.session(&headers).as_ref(), now);
    Ok(Json(result).into_response())
}

async fn page(
    State(app): State<Arc<AppState>>,
    Query(params): Query<Params>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let mode = match params.mode.as_deref() {
        None => PageMode::Filtered,
        Some(m) => m.parse().map_err(ApiError::BadRequest)?,
    };
    let doc = app.page(params.session(&headers).as_ref(), mode);
    Ok(([(CONTENT_TYPE, HTML), (CACHE_CONTROL, "no-store")], doc).into_response())
}

async fn get_rules(State(app): State<Arc<AppState>>) -> Response {
    ([(CONTENT_TYPE, TEXT)], app.rules().source.clone()).into_response()
}

async fn put_rules(
    State(app): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ApiError> {
    let source = String::from_utf8(body.to_vec())
        .map_err(|_| ApiError::BadRequest("rules must be UTF-8 text".into()))?;
    let (rules, snippets) = app.replace_rules(source).await?;
    tracing::info!(rules, snippets, "rules replaced");
    Ok(Json(json!({ "rules": rules, "snippets": snippets })))
}

async fn venue(State(app): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let venue = app.venue().ok_or(ApiError::NotFound("no venue loaded"))?;
    Ok(([(CONTENT_TYPE, JSON_TYPE)], venue.to_json()).into_response())
}

async fn shim(State(app): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let path = app
        .config()
        .shim_path
        .as_ref()
        .ok_or(ApiError::NotFound("no shim script configured"))?;
    let script = tokio::fs::read(path)
        .await
        .map_err(|_| ApiError::NotFound("shim script unavailable"))?;
    Ok(([(CONTENT_TYPE, JAVASCRIPT)], script).into_response())
}
