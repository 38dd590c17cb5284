//! HTTP review API over a run's artifact directory.
//!
//! | Method | Path                       | Body / response                      |
//! |--------|----------------------------|--------------------------------------|
//! | GET    | `/rejections`              | page of rejection summaries          |
//! | GET    | `/rejections/{id}`         | full rejection payload               |
//! | POST   | `/rejections/{id}/decision`| append a reviewer decision           |
//! | GET    | `/report`                  | reports with decisions applied       |
//!
//! Reads share a lock; decision writes take it exclusively, so a decision
//! is on disk before any later read observes it.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ifac::data::InstanceId;
use ifac::review::{FieldError, ReviewAction, ReviewDecision, ReviewStore};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::RwLock;

pub type SharedStore = Arc<RwLock<ReviewStore>>;

const DEFAULT_LIMIT: usize = 50;

pub fn router(store: ReviewStore) -> Router {
    Router::new()
        .route("/rejections", get(list))
        .route("/rejections/{id}", get(detail))
        .route("/rejections/{id}/decision", post(decide))
        .route("/report", get(report))
        .with_state(Arc::new(RwLock::new(store)))
}

enum ApiError {
    NotFound(String),
    Invalid(Vec<FieldError>),
    BadRequest(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::NotFound(id) => (
                StatusCode::NOT_FOUND,
                Json(json!({ "error": format!("no unfairness-based rejection with id `{id}`") })),
            )
                .into_response(),
            ApiError::Invalid(fields) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                Json(json!({ "error": "invalid decision", "fields": fields })),
            )
                .into_response(),
            ApiError::BadRequest(message) => {
                (StatusCode::BAD_REQUEST, Json(json!({ "error": message }))).into_response()
            }
            ApiError::Internal(message) => {
                (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": message }))).into_response()
            }
        }
    }
}

#[derive(Deserialize)]
struct PageQuery {
    offset: Option<usize>,
    limit: Option<usize>,
}

async fn list(State(store): State<SharedStore>, Query(q): Query<PageQuery>) -> Response {
    let store = store.read().await;
    Json(store.rejections(q.offset.unwrap_or(0), q.limit.unwrap_or(DEFAULT_LIMIT))).into_response()
}

async fn detail(State(store): State<SharedStore>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let store = store.read().await;
    let id = InstanceId(id);
    match store.detail(&id) {
        Some(d) => Ok(Json(d).into_response()),
        None => Err(ApiError::NotFound(id.0)),
    }
}

/// Request body; the outcome id comes from the path and a missing timestamp
/// is filled with the server time.
#[derive(Deserialize)]
struct DecisionBody {
    reviewer: String,
    action: ReviewAction,
    #[serde(default)]
    label: Option<u8>,
    #[serde(default)]
    rationale: String,
    #[serde(default)]
    timestamp: Option<String>,
}

async fn decide(
    State(store): State<SharedStore>,
    Path(id): Path<String>,
    body: Result<Json<DecisionBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(body) = body.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let decision = ReviewDecision {
        outcome_id: InstanceId(id),
        reviewer: body.reviewer,
        action: body.action,
        label: body.label,
        rationale: body.rationale,
        timestamp: body
            .timestamp
            .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
    };
    decision.validate().map_err(ApiError::Invalid)?;
    let mut store = store.write().await;
    if !store.is_rejection(&decision.outcome_id) {
        return Err(ApiError::NotFound(decision.outcome_id.0));
    }
    store
        .decide(decision.clone())
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok((StatusCode::CREATED, Json(decision)).into_response())
}

async fn report(State(store): State<SharedStore>) -> Result<Response, ApiError> {
    let store = store.read().await;
    let reports = store.report().map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(reports).into_response())
}

pub async fn serve(store: ReviewStore, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review API listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store)).await?;
    Ok(())
}
