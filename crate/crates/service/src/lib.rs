//! HTTP JSON facade over the analysis pipeline with a durable review queue.
//!
//! Endpoints (all under `/api`, bearer-token protected when a token is set):
//!
//! * `POST /api/analyze`: raw RFC 822 bytes, or a JSON corpus record when
//!   the content type is JSON.
//! * `GET /api/queue?status=pending|decided|all`
//! * `POST /api/queue/{id}/decision` with `{decision, reviewer}`
//! * `GET /api/records/{id}`
//! * `GET /api/metrics`

pub mod store;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use phish_core::message::{parse_eml, CorpusRecord, EmailMessage};
use phish_core::pipeline::{Analysis, Analyzer};
use phish_core::redaction::Redactor;
use phish_core::rules::Verdict;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

pub use store::{AnalysisRecord, Review, ReviewDecision, Store, StoreError, StoreOptions};

pub const TOKEN_ENV: &str = "PHISH_API_TOKEN";
pub const DEFAULT_MAX_BODY: usize = 1 << 20;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub max_body_bytes: usize,
    /// Shared bearer token; `None` leaves the API open.
    pub token: Option<String>,
    pub static_dir: Option<PathBuf>,
    pub store: StoreOptions,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            max_body_bytes: DEFAULT_MAX_BODY,
            token: None,
            static_dir: None,
            store: StoreOptions::default(),
        }
    }

    /// Reads the token from [`TOKEN_ENV`]; an empty value counts as unset.
    pub fn with_env_token(mut self) -> Self {
        self.token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        self
    }
}

#[derive(Clone)]
pub struct AppState {
    pub analyzer: Arc<Analyzer>,
    pub store: Arc<Store>,
    redactor: Redactor,
    max_body_bytes: usize,
    token: Option<Arc<str>>,
}

impl AppState {
    pub fn open(analyzer: Analyzer, cfg: &ServiceConfig) -> Result<AppState, StoreError> {
        let store = Store::open(&cfg.data_dir, cfg.store)?;
        Ok(AppState {
            analyzer: Arc::new(analyzer),
            store: Arc::new(store),
            redactor: Redactor::default(),
            max_body_bytes: cfg.max_body_bytes,
            token: cfg.token.as_deref().map(Arc::from),
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::AlreadyDecided(_) | StoreError::NotQueued(_) => StatusCode::CONFLICT,
            _ => {
                tracing::error!(error = %e, "store failure");
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        ApiError::new(status, e.to_string())
    }
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/analyze", post(analyze))
        .route("/api/queue", get(queue))
        .route("/api/queue/{id}/decision", post(decide))
        .route("/api/records/{id}", get(record))
        .route("/api/metrics", get(metrics))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds and serves until ctrl-c.
pub async fn serve(state: AppState, cfg: &ServiceConfig, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state, cfg.static_dir.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_ref()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "missing or invalid bearer token").into_response();
        }
    }
    next.run(req).await
}

fn parse_body(headers: &HeaderMap, bytes: &[u8]) -> Result<EmailMessage, ApiError> {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|ct| ct.contains("json"));
    let parsed = if is_json {
        let record: CorpusRecord = serde_json::from_slice(bytes)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed message: {e}")))?;
        record.into_message()
    } else {
        parse_eml(bytes)
    };
    parsed.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed message: {e}")))
}

/// Masks free text that reaches disk or a client.
fn scrub(mut a: Analysis, r: &Redactor) -> Analysis {
    let clean = |s: &str| r.redact(s).redacted_text;
    a.id = clean(&a.id);
    for e in a.phase1.indicators.evidence.values_mut() {
        *e = clean(e);
    }
    for h in &mut a.neighbors.hits {
        h.snippet = clean(&h.snippet);
    }
    for b in &mut a.explanation.bullets {
        b.text = clean(&b.text);
    }
    if let Some(reason) = &a.explanation.fallback_reason {
        a.explanation.fallback_reason = Some(clean(reason));
    }
    a
}

async fn analyze(State(state): State<AppState>, headers: HeaderMap, body: Body) -> Result<Json<AnalysisRecord>, ApiError> {
    let bytes = to_bytes(body, state.max_body_bytes).await.map_err(|_| {
        ApiError::new(StatusCode::BAD_REQUEST, format!("body exceeds {} bytes", state.max_body_bytes))
    })?;
    let msg = parse_body(&headers, &bytes)?;
    let record = tokio::task::spawn_blocking(move || {
        let analysis = scrub(state.analyzer.analyze(&msg), &state.redactor);
        let message_id = state.redactor.redact(&msg.id).redacted_text;
        let subject = state.redactor.redact(&msg.subject).redacted_text;
        state.store.insert(|id, seq, created_at| AnalysisRecord {
            id,
            seq,
            message_id,
            subject,
            created_at,
            analysis,
            review: None,
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    tracing::info!(id = %record.id, verdict = %record.verdict().as_str(), degraded = record.analysis.degraded, "analyzed");
    Ok(Json(record))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub id: String,
    pub message_id: String,
    pub subject: String,
    pub verdict: Verdict,
    pub display_score: f64,
    pub rationale_code: String,
    pub created_at: String,
    pub review: Option<Review>,
}

impl From<&AnalysisRecord> for QueueItem {
    fn from(r: &AnalysisRecord) -> Self {
        QueueItem {
            id: r.id.clone(),
            message_id: r.message_id.clone(),
            subject: r.subject.clone(),
            verdict: r.verdict(),
            display_score: r.analysis.decision.display_score,
            rationale_code: r.analysis.decision.rationale_code.as_str().to_string(),
            created_at: r.created_at.clone(),
            review: r.review.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct QueueQuery {
    status: Option<String>,
}

async fn queue(State(state): State<AppState>, Query(q): Query<QueueQuery>) -> Result<Json<Vec<QueueItem>>, ApiError> {
    let records = match q.status.as_deref().unwrap_or("pending") {
        "pending" => state.store.pending(),
        "decided" => state.store.list(|r| r.review.is_some()),
        "all" => state.store.list(AnalysisRecord::is_queued),
        other => return Err(ApiError::new(StatusCode::BAD_REQUEST, format!("unknown status {other:?}"))),
    };
    Ok(Json(records.iter().map(QueueItem::from).collect()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionBody {
    pub decision: ReviewDecision,
    pub reviewer: String,
}

async fn decide(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<DecisionBody>, JsonRejection>,
) -> Result<Json<AnalysisRecord>, ApiError> {
    let Json(body) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    if body.reviewer.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "reviewer must not be empty"));
    }
    let reviewer = state.redactor.redact(body.reviewer.trim()).redacted_text;
    let updated = tokio::task::spawn_blocking(move || state.store.decide(&id, body.decision, &reviewer))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(updated))
}

async fn record(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<AnalysisRecord>, ApiError> {
    state.store.get(&id).map(Json).ok_or_else(|| ApiError::from(StoreError::NotFound(id)))
}

/// Live counters over every stored record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total: usize,
    pub verdicts: BTreeMap<Verdict, usize>,
    /// Share of each verdict; all zero when nothing has been analyzed.
    pub shares: BTreeMap<Verdict, f64>,
    pub review_rate: f64,
    pub pending: usize,
    pub decided: usize,
    pub degraded: usize,
    pub rationale_codes: BTreeMap<String, usize>,
}

pub fn compute_metrics(records: &[AnalysisRecord]) -> Metrics {
    let total = records.len();
    let mut verdicts: BTreeMap<Verdict, usize> =
        [Verdict::Benign, Verdict::NeedsReview, Verdict::Phishing].into_iter().map(|v| (v, 0)).collect();
    let mut rationale_codes = BTreeMap::new();
    for r in records {
        *verdicts.entry(r.verdict()).or_default() += 1;
        *rationale_codes.entry(r.analysis.decision.rationale_code.as_str().to_string()).or_default() += 1;
    }
    let share = |n: usize| if total == 0 { 0.0 } else { n as f64 / total as f64 };
    Metrics {
        total,
        shares: verdicts.iter().map(|(&v, &n)| (v, share(n))).collect(),
        review_rate: share(verdicts[&Verdict::NeedsReview]),
        verdicts,
        pending: records.iter().filter(|r| r.is_pending()).count(),
        decided: records.iter().filter(|r| r.review.is_some()).count(),
        degraded: records.iter().filter(|r| r.analysis.degraded).count(),
        rationale_codes,
    }
}

async fn metrics(State(state): State<AppState>) -> Json<Metrics> {
    Json(compute_metrics(&state.store.list(|_| true)))
}
