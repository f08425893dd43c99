//! HTTP API and shared helpers for the `adapt-forge` binary.
//!
//! Jobs run on the blocking pool; clients poll `GET /adaptations/{id}`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use adapt_forge::catalog::UserProfile;
use adapt_forge::gates::{run_gates, GateReport};
use adapt_forge::genai::{parse_envelope, TransformResult};
use adapt_forge::prompt::DomainInput;
use adapt_forge::service::{
    backend_from_config, AdaptService, Components, FeedbackEntry, ReviewAction, ServiceConfig,
    ServiceError,
};
use adapt_forge::trace::ReportFormat;
use adapt_forge::ui::{bundled_asset, PictogramMap};
use anyhow::Context;
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<AdaptService>,
    pub token: Option<String>,
}

/// Error body: `{"error": <kind>, "message": <text>}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let (status, kind) = match &e {
            ServiceError::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            ServiceError::UnknownJob(_) => (StatusCode::NOT_FOUND, "unknownJob"),
            ServiceError::UnknownComponent(_) => (StatusCode::NOT_FOUND, "unknownComponent"),
            ServiceError::IllegalTransition(_) => (StatusCode::CONFLICT, "illegalTransition"),
            ServiceError::JobFailed(_) => (StatusCode::BAD_GATEWAY, "jobFailed"),
            ServiceError::Ledger(_)
            | ServiceError::Prompt(_)
            | ServiceError::Storage(_)
            | ServiceError::Config(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, kind, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.kind, "message": self.message })),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Deserialize)]
pub struct AdaptationRequest {
    pub profile: UserProfile,
    pub input: DomainInput,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct JobCreated {
    job_id: String,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct FeedbackCreated {
    feedback_id: String,
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/adaptations", post(create_adaptation))
        .route("/adaptations/{id}", get(get_adaptation))
        .route("/adaptations/{id}/trace", get(get_trace))
        .route("/adaptations/{id}/review", post(post_review))
        .route("/review-queue", get(review_queue))
        .route("/feedback", post(post_feedback))
        .route("/compliance-report", get(compliance_report))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/assets/pictograms/{file}", get(pictogram_asset))
        .merge(api)
        .with_state(state)
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let expected = format!("Bearer {token}");
        let given = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok());
        if given != Some(expected.as_str()) {
            return ApiError::new(
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "missing or wrong bearer token",
            )
            .into_response();
        }
    }
    next.run(req).await
}

async fn create_adaptation(
    State(state): State<AppState>,
    Json(mut req): Json<AdaptationRequest>,
) -> ApiResult<(StatusCode, Json<JobCreated>)> {
    req.profile.apply_implied_flags();
    let job_id = state.service.create_job(req.profile, req.input)?;
    let service = state.service.clone();
    let id = job_id.clone();
    tokio::task::spawn_blocking(move || {
        if let Err(e) = service.execute_job(&id) {
            tracing::warn!(job = %id, "job did not complete: {e}");
        }
    });
    Ok((StatusCode::ACCEPTED, Json(JobCreated { job_id })))
}

async fn get_adaptation(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Response> {
    let job = state
        .service
        .get_job(&id)
        .ok_or(ServiceError::UnknownJob(id))?;
    Ok(Json(job).into_response())
}

async fn get_trace(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Response> {
    Ok(Json(state.service.job_trace(&id)?).into_response())
}

async fn review_queue(State(state): State<AppState>) -> Response {
    Json(state.service.review_queue()).into_response()
}

async fn post_review(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(mut action): Json<ReviewAction>,
) -> ApiResult<Response> {
    if !action.job_id.is_empty() && action.job_id != id {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "validation",
            "jobId in body does not match the path",
        ));
    }
    action.job_id = id;
    let service = state.service.clone();
    let job = tokio::task::spawn_blocking(move || service.apply_review(action))
        .await
        .map_err(|e| {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
        })??;
    Ok(Json(job).into_response())
}

async fn post_feedback(
    State(state): State<AppState>,
    Json(entry): Json<FeedbackEntry>,
) -> ApiResult<(StatusCode, Json<FeedbackCreated>)> {
    let feedback_id = state.service.record_feedback(entry)?;
    Ok((StatusCode::CREATED, Json(FeedbackCreated { feedback_id })))
}

async fn compliance_report(
    State(state): State<AppState>,
    Query(q): Query<ReportQuery>,
) -> ApiResult<Response> {
    let format: ReportFormat = match q.format.as_deref() {
        None => ReportFormat::Full,
        Some(f) => f
            .parse()
            .map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, "validation", e))?,
    };
    Ok(Json(state.service.compliance_report(format)).into_response())
}

async fn pictogram_asset(UrlPath(file): UrlPath<String>) -> ApiResult<Response> {
    let body = bundled_asset(&format!("pictograms/{file}"))
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknownAsset", file))?;
    Ok((
        [(
            header::CONTENT_TYPE,
            HeaderValue::from_static("image/svg+xml"),
        )],
        body,
    )
        .into_response())
}

/// Reads the config file (if any), applies environment overrides and the
/// command-line path flags.
pub fn load_config(
    config: Option<&Path>,
    catalog: Option<PathBuf>,
    data_dir: Option<PathBuf>,
) -> anyhow::Result<ServiceConfig> {
    let mut c = match config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    c.apply_env()?;
    if catalog.is_some() {
        c.catalog_path = catalog;
    }
    if data_dir.is_some() {
        c.data_dir = data_dir;
    }
    Ok(c)
}

pub fn build_service(config: &ServiceConfig) -> anyhow::Result<AdaptService> {
    let components = Components::from_config(config).context("loading components")?;
    let backend =
        backend_from_config(&config.backend, &components.pictos).context("configuring backend")?;
    Ok(AdaptService::new(config, components, backend)?)
}

/// Parses a candidate output: an `adapt` envelope, a TransformResult JSON
/// document, or plain text taken as a single step.
pub fn read_candidate(src: &str, pictos: &PictogramMap) -> anyhow::Result<TransformResult> {
    if src.contains("```adapt") {
        return Ok(parse_envelope(src, pictos)?);
    }
    if src.trim_start().starts_with('{') {
        return serde_json::from_str(src).context("candidate is not a TransformResult document");
    }
    Ok(TransformResult::passthrough(src.trim()))
}

/// Reads a domain input: a DomainInput JSON document or plain text.
pub fn read_input(src: &str, input_id: &str) -> anyhow::Result<DomainInput> {
    if src.trim_start().starts_with('{') {
        return serde_json::from_str(src).context("input is not a DomainInput document");
    }
    Ok(DomainInput::new(input_id, src.trim()))
}

pub fn gate_check(
    input: &DomainInput,
    candidate: &TransformResult,
    config: &ServiceConfig,
) -> GateReport {
    run_gates(input, candidate, &config.gates, 1)
}
