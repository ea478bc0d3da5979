//! JSON-over-HTTP surface of the orchestrator.
//!
//! Handlers are thin: they move the request into a blocking task, call one
//! orchestrator operation and serialize the result. Mutating routes require
//! `Authorization: Bearer <token>` when a token is configured.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cfuqc_core::agents::Quality;
use cfuqc_core::metrics::report::MetricsReport;
use cfuqc_core::orchestrator::{ExpertVerdict, Orchestrator, PlateState, ReviewItem, RunStats, Submission};
use cfuqc_core::{ClassCounts, Error, ErrorCode};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Upper bound on an uploaded image.
pub const MAX_UPLOAD_BYTES: usize = 32 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub orchestrator: Arc<Orchestrator>,
    pub token: Option<Arc<str>>,
    pub export_dir: PathBuf,
}

impl AppState {
    pub fn new(orchestrator: Orchestrator, token: Option<String>, export_dir: PathBuf) -> Self {
        AppState {
            orchestrator: Arc::new(orchestrator),
            token: token.map(Arc::from),
            export_dir,
        }
    }
}

/// Error body shared by every failing response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ApiErrorBody,
}

pub fn status_for(code: ErrorCode) -> StatusCode {
    match code {
        ErrorCode::Validation | ErrorCode::InsufficientData => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorCode::NotFound => StatusCode::NOT_FOUND,
        ErrorCode::Conflict | ErrorCode::IllegalTransition => StatusCode::CONFLICT,
        ErrorCode::Storage => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn code_name(code: ErrorCode) -> String {
    serde_json::to_value(code)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_else(|| "storage".into())
}

impl ApiError {
    fn unauthorized() -> Self {
        ApiError {
            status: StatusCode::UNAUTHORIZED,
            body: ApiErrorBody {
                code: "unauthorized".into(),
                message: "missing or wrong bearer token".into(),
                detail: None,
            },
        }
    }

    fn validation(message: impl Into<String>) -> Self {
        Error::validation("body", message).into()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = e.code();
        let detail = match &e {
            Error::Validation { field, .. } => Some(json!({ "field": field })),
            Error::NotFound { what, id } => Some(json!({ "resource": what, "id": id })),
            Error::IllegalTransition { plate_id, from, to } => Some(json!({ "plate_id": plate_id, "from": from, "to": to })),
            Error::InsufficientData { needed, got, .. } => Some(json!({ "needed": needed, "got": got })),
            _ => None,
        };
        ApiError {
            status: status_for(code),
            body: ApiErrorBody {
                code: code_name(code),
                message: e.to_string(),
                detail,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs an orchestrator call off the async workers.
async fn blocking<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Orchestrator) -> cfuqc_core::Result<T> + Send + 'static,
{
    let o = state.orchestrator.clone();
    match tokio::task::spawn_blocking(move || f(&o)).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(Error::Storage(format!("worker failed: {e}")).into()),
    }
}

async fn require_token(State(state): State<AppState>, headers: HeaderMap, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_ref()) {
            return ApiError::unauthorized().into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: AppState) -> Router {
    let mutating = Router::new()
        .route("/plates", post(submit_plate))
        .route("/plates/{id}/process", post(process_plate))
        .route("/plates/{id}/verdict", post(submit_verdict))
        .route("/export/{run_id}", post(export_run))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    let reading = Router::new()
        .route("/health", get(health))
        .route("/plates/{id}", get(get_plate))
        .route("/plates/{id}/image", get(get_image))
        .route("/review/queue", get(review_queue))
        .route("/metrics/run/{run_id}", get(run_metrics))
        .route("/audit/verify", get(verify_audit));
    mutating
        .merge(reading)
        .layer(axum::extract::DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

fn image_url(plate_id: &str) -> String {
    format!("/plates/{plate_id}/image")
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Debug, Deserialize)]
struct SubmitQuery {
    run_id: Option<String>,
    label: Option<String>,
}

#[derive(Debug, Serialize)]
struct Submitted {
    plate_id: String,
    run_id: String,
    image_sha256: String,
    created: bool,
    image_url: String,
}

async fn submit_plate(State(state): State<AppState>, Query(q): Query<SubmitQuery>, body: Bytes) -> ApiResult<Response> {
    if body.is_empty() {
        return Err(ApiError::validation("request body must be a PNG image"));
    }
    let sub = Submission {
        run_id: q.run_id,
        label: q.label,
        ground_truth: None,
    };
    let (rec, created) = blocking(&state, move |o| o.submit_plate(&body, sub)).await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    let out = Submitted {
        image_url: image_url(&rec.plate_id),
        plate_id: rec.plate_id,
        run_id: rec.run_id,
        image_sha256: rec.image_sha256,
        created,
    };
    Ok((status, Json(out)).into_response())
}

/// A plate with the fields a client needs to render it.
#[derive(Debug, Serialize)]
struct PlateView {
    #[serde(flatten)]
    state: PlateState,
    final_count: Option<u32>,
    image_url: String,
}

impl From<PlateState> for PlateView {
    fn from(state: PlateState) -> Self {
        PlateView {
            final_count: state.final_count(),
            image_url: image_url(&state.plate_id),
            state,
        }
    }
}

async fn process_plate(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<PlateView>> {
    let s = blocking(&state, move |o| o.process_plate(&id)).await?;
    Ok(Json(s.into()))
}

async fn get_plate(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<PlateView>> {
    let s = blocking(&state, move |o| o.plate(&id)).await?;
    Ok(Json(s.into()))
}

async fn get_image(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let png = blocking(&state, move |o| o.plate_image(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Debug, Deserialize)]
struct Page {
    #[serde(default)]
    offset: usize,
    limit: Option<usize>,
}

#[derive(Debug, Serialize)]
struct QueueItem {
    #[serde(flatten)]
    item: ReviewItem,
    image_url: String,
}

#[derive(Debug, Serialize)]
struct QueuePage {
    total: usize,
    offset: usize,
    items: Vec<QueueItem>,
}

async fn review_queue(State(state): State<AppState>, Query(page): Query<Page>) -> ApiResult<Json<QueuePage>> {
    let all = blocking(&state, |o| Ok(o.review_queue())).await?;
    let total = all.len();
    let items = all
        .into_iter()
        .skip(page.offset)
        .take(page.limit.unwrap_or(usize::MAX))
        .map(|item| QueueItem {
            image_url: image_url(&item.plate_id),
            item,
        })
        .collect();
    Ok(Json(QueuePage {
        total,
        offset: page.offset,
        items,
    }))
}

/// Verdict body; the plate comes from the path.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerdictBody {
    #[serde(default)]
    plate_id: Option<String>,
    reviewer_id: String,
    final_count: u32,
    final_quality: Quality,
    #[serde(default)]
    final_class_counts: ClassCounts,
    #[serde(default)]
    note: String,
}

async fn submit_verdict(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<VerdictBody>, JsonRejection>,
) -> ApiResult<Json<PlateView>> {
    let Json(b) = body.map_err(|e| ApiError::validation(e.body_text()))?;
    if b.plate_id.as_deref().is_some_and(|p| p != id) {
        return Err(Error::validation("plate_id", "differs from the plate in the path").into());
    }
    let verdict = ExpertVerdict {
        plate_id: id,
        reviewer_id: b.reviewer_id,
        final_count: b.final_count,
        final_quality: b.final_quality,
        final_class_counts: b.final_class_counts,
        note: b.note,
        timestamp: chrono::Utc::now(),
    };
    let s = blocking(&state, move |o| o.submit_expert_verdict(verdict)).await?;
    Ok(Json(s.into()))
}

#[derive(Debug, Serialize)]
struct RunMetrics {
    stats: RunStats,
    report: MetricsReport,
}

async fn run_metrics(State(state): State<AppState>, Path(run_id): Path<String>) -> ApiResult<Json<RunMetrics>> {
    let m = blocking(&state, move |o| {
        Ok(RunMetrics {
            stats: o.run_stats(&run_id)?,
            report: o.run_report(&run_id)?,
        })
    })
    .await?;
    Ok(Json(m))
}

async fn verify_audit(State(state): State<AppState>) -> ApiResult<Json<Value>> {
    let (report, fault) = blocking(&state, |o| Ok((o.store().verify_audit()?, o.store().fault()))).await?;
    let mut v = serde_json::to_value(report).map_err(Error::from)?;
    v["fault"] = json!(fault);
    Ok(Json(v))
}

async fn export_run(State(state): State<AppState>, Path(run_id): Path<String>) -> ApiResult<Json<Value>> {
    let dir = state.export_dir.clone();
    let summary = blocking(&state, move |o| o.export_qm(&run_id, &dir)).await?;
    Ok(Json(serde_json::to_value(summary).map_err(Error::from)?))
}
