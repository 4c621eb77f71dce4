//! JSON API over the store, plus static hosting for the web client.
//!
//! Sessions travel as `Authorization: Bearer <id>`, as a `session` query
//! parameter, or (for submissions) as a `session` body field. Every error
//! body has the shape `{"error": <code>, "message": <text>}`; validation
//! failures add a `violations` list.

use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::Deserialize;
use serde_json::{json, Value};
use surveystat_core::report::{
    self, current_report, filter_by_level, filter_by_role, AnalysisKind, BlockOutcome, BlockSpec, ReportError,
    ReportSource, SourceData,
};
use surveystat_core::stats::PcaMode;
use surveystat_core::survey::{validate_response, TokenClass, TokenRejection, Violation};
use surveystat_core::{Dataset, Principal, Questionnaire, ReportCache, ReportSpec, Store, StoreError};
use tower_http::services::ServeDir;

use crate::config::ServiceConfig;
use crate::notify::{Confirmation, Notifier, Transport};
use crate::session::SessionStore;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub cache: Arc<ReportCache>,
    pub sessions: Arc<SessionStore>,
    pub notifier: Notifier,
    pub config: Arc<ServiceConfig>,
}

impl AppState {
    /// Must be called inside a Tokio runtime when a transport is given (the
    /// notification worker is spawned here).
    pub fn new(config: ServiceConfig, store: Store, transport: Option<Arc<dyn Transport>>) -> Self {
        let notifier = match transport {
            Some(t) => Notifier::start(t, config.notify.clone()),
            None => Notifier::disabled(),
        };
        Self {
            store: Arc::new(store),
            cache: Arc::new(ReportCache::new()),
            sessions: Arc::new(SessionStore::new(config.session_ttl())),
            notifier,
            config: Arc::new(config),
        }
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/auth", post(auth))
        .route("/api/questionnaires/{id}", get(get_questionnaire))
        .route("/api/questionnaires/{id}/responses", post(submit_response))
        .route("/api/questionnaires/{id}/report", get(get_questionnaire_report))
        .route("/api/reports/{id}", get(get_report))
        .route("/api/datasets", post(upload_dataset))
        .route("/api/datasets/{id}/analysis", get(dataset_analysis));
    let app = match &state.config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(middleware::from_fn(access_log)).with_state(state)
}

/// One line per request: `<METHOD> <PATH> <STATUS> <ms>ms`. The query
/// string is left out because it may carry a session id.
async fn access_log(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    let start = Instant::now();
    let resp = next.run(req).await;
    tracing::info!(target: "access", "{} {} {} {}ms", method, path, resp.status().as_u16(), start.elapsed().as_millis());
    resp
}

// ---- errors -----------------------------------------------------------------

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    violations: Option<Vec<Violation>>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            violations: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn unauthorized(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", message)
    }

    fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!("{}", self.message);
        }
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(v) = self.violations {
            body["violations"] = json!(v);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        use StoreError::*;
        let message = e.to_string();
        match e {
            UnknownQuestionnaire(_) | UnknownDataset(_) | UnknownReportSpec(_) => {
                Self::new(StatusCode::NOT_FOUND, "not_found", message)
            }
            Exists { .. } => Self::new(StatusCode::CONFLICT, "exists", message),
            AlreadySubmitted => Self::new(StatusCode::CONFLICT, "already_submitted", message),
            Token(_) => Self::unauthorized(message),
            ViewerCannotSubmit => Self::forbidden(message),
            Definition(_) | Dataset(_) | InvalidId(_) | InvalidTokenCount | VersionAhead { .. } => {
                Self::bad_request(message)
            }
            Io { .. } | Corrupt { .. } | QuestionnaireMismatch { .. } => Self::internal(message),
        }
    }
}

impl From<ReportError> for ApiError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Store(s) => s.into(),
            ReportError::DanglingReference { .. } | ReportError::InvalidBlock { .. } => {
                Self::new(StatusCode::BAD_REQUEST, "invalid_spec", e.to_string())
            }
            ReportError::SourceMismatch { .. } => Self::internal(e.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs store work (file I/O and fsync) off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

// ---- sessions ---------------------------------------------------------------

#[derive(Deserialize, Default)]
struct SessionQuery {
    session: Option<String>,
}

fn session_id(headers: &HeaderMap, query: &SessionQuery) -> Option<String> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|s| s.trim().to_string())
        .or_else(|| query.session.clone())
}

fn principal(state: &AppState, id: Option<String>) -> ApiResult<Principal> {
    let id = id.ok_or_else(|| ApiError::unauthorized("missing session"))?;
    state
        .sessions
        .get(&id)
        .ok_or_else(|| ApiError::unauthorized("unknown or expired session"))
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

/// Whether `p` may read reports of questionnaire `q`.
fn may_view(state: &AppState, p: &Principal, q: &Questionnaire) -> ApiResult<()> {
    let admin = p.level >= state.config.admin_level;
    if p.questionnaire_id != q.id && !admin {
        return Err(ApiError::forbidden("session belongs to another questionnaire"));
    }
    if p.level < q.min_level_to_view_report {
        return Err(ApiError::forbidden(format!(
            "report requires level {}, session has level {}",
            q.min_level_to_view_report, p.level
        )));
    }
    Ok(())
}

fn json_text(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

// ---- handlers ---------------------------------------------------------------

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AuthBody {
    token: String,
    questionnaire: Option<String>,
}

async fn auth(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let AuthBody { token, questionnaire } = parse_body(&body)?;
    let store = state.store.clone();
    let principal = blocking(move || {
        let target = match questionnaire {
            Some(q) => q,
            // Each questionnaire salts digests differently, so a token is
            // known to at most one of them.
            None => store
                .questionnaire_ids()?
                .into_iter()
                .find(|q| !matches!(store.check_token(q, &token), Err(StoreError::Token(TokenRejection::UnknownToken))))
                .ok_or_else(|| ApiError::unauthorized(TokenRejection::UnknownToken.to_string()))?,
        };
        match store.redeem_token(&target, &token) {
            Ok(p) => Ok(p),
            Err(StoreError::UnknownQuestionnaire(_)) => Err(ApiError::unauthorized(TokenRejection::UnknownToken.to_string())),
            Err(e) => Err(e.into()),
        }
    })
    .await?;
    let class = principal.class;
    let (questionnaire, level) = (principal.questionnaire_id.clone(), principal.level);
    let session = state.sessions.create(principal);
    Ok(Json(json!({
        "session": session,
        "questionnaire": questionnaire,
        "level": level,
        "class": class,
        "expires_in": state.sessions.ttl().as_secs(),
    })))
}

async fn load_questionnaire(state: &AppState, id: String) -> ApiResult<Questionnaire> {
    let store = state.store.clone();
    blocking(move || Ok(store.load_questionnaire(&id)?)).await
}

async fn get_questionnaire(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<SessionQuery>,
    headers: HeaderMap,
) -> ApiResult<Json<Questionnaire>> {
    let q = load_questionnaire(&state, id).await?;
    let p = principal(&state, session_id(&headers, &query))?;
    if p.questionnaire_id != q.id && p.level < state.config.admin_level {
        return Err(ApiError::forbidden("session belongs to another questionnaire"));
    }
    Ok(Json(q))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitBody {
    session: Option<String>,
    answers: serde_json::Map<String, Value>,
    /// Where to send the confirmation; not stored with the response.
    contact: Option<String>,
}

async fn submit_response(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let SubmitBody { session, answers, contact } = parse_body(&body)?;
    let q = load_questionnaire(&state, id).await?;
    let p = principal(&state, session.or_else(|| session_id(&headers, &SessionQuery::default())))?;
    if p.questionnaire_id != q.id {
        return Err(ApiError::unauthorized("session is not valid for this questionnaire"));
    }
    if p.class == TokenClass::Viewer {
        return Err(StoreError::ViewerCannotSubmit.into());
    }
    let record = validate_response(&q, &answers, p.fingerprint.clone(), Utc::now()).map_err(|violations| {
        let mut e = ApiError::bad_request(format!("{} answer(s) rejected", violations.len()));
        e.code = "validation";
        e.violations = Some(violations);
        e
    })?;

    let store = state.store.clone();
    let notifier = state.notifier.clone();
    let recipient = contact.unwrap_or_else(|| p.fingerprint.as_str().to_string());
    let version = blocking(move || {
        Ok(store.append_response_with(&q.id, record, |version, r| {
            notifier.enqueue(Confirmation {
                recipient: &recipient,
                questionnaire_id: &q.id,
                questionnaire_title: &q.title,
                version,
                submitted_at: r.submitted_at,
            });
        })?)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(json!({ "version": version }))))
}

async fn get_questionnaire_report(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<SessionQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let q = load_questionnaire(&state, id).await?;
    let p = principal(&state, session_id(&headers, &query))?;
    may_view(&state, &p, &q)?;
    let (store, cache) = (state.store.clone(), state.cache.clone());
    let report = blocking(move || {
        let spec = report::spec_for_questionnaire(&store, &q)?;
        Ok(current_report(&store, &cache, &spec)?)
    })
    .await?;
    Ok(json_text(filter_by_role(&report, &p).to_json()))
}

async fn get_report(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<SessionQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let store = state.store.clone();
    let spec = blocking(move || Ok(store.load_report_spec(&id)?)).await?;
    let p = principal(&state, session_id(&headers, &query))?;
    if let ReportSource::Questionnaire(qid) = &spec.source {
        let q = load_questionnaire(&state, qid.clone()).await?;
        may_view(&state, &p, &q)?;
    }
    let (store, cache) = (state.store.clone(), state.cache.clone());
    let report = blocking(move || Ok(current_report(&store, &cache, &spec)?)).await?;
    Ok(json_text(filter_by_level(&report, p.level).to_json()))
}

#[derive(Deserialize)]
struct UploadQuery {
    name: Option<String>,
    session: Option<String>,
}

async fn upload_dataset(
    State(state): State<AppState>,
    Query(query): Query<UploadQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let p = principal(&state, session_id(&headers, &SessionQuery { session: query.session }))?;
    if p.level < state.config.admin_level {
        return Err(ApiError::forbidden(format!(
            "dataset upload requires level {}",
            state.config.admin_level
        )));
    }
    let name = query.name.ok_or_else(|| ApiError::bad_request("missing dataset name (?name=)"))?;
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("CSV body is not UTF-8"))?;
    let dataset = Dataset::from_csv(name, text).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let store = state.store.clone();
    let summary = json!({
        "dataset": dataset.id,
        "rows": dataset.rows.len(),
        "columns": dataset.columns,
    });
    blocking(move || Ok(store.store_dataset(&dataset, false)?)).await?;
    Ok((StatusCode::CREATED, Json(summary)))
}

#[derive(Deserialize)]
struct AnalysisQuery {
    kind: String,
    mode: Option<String>,
    /// Comma-separated column names; all columns when absent.
    fields: Option<String>,
    session: Option<String>,
}

async fn dataset_analysis(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<AnalysisQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    principal(&state, session_id(&headers, &SessionQuery { session: query.session.clone() }))?;
    let kind: AnalysisKind = serde_json::from_value(Value::String(query.kind.clone()))
        .map_err(|_| ApiError::bad_request(format!("unknown analysis kind {:?}", query.kind)))?;
    let mut block = BlockSpec::new(kind, 0);
    if let Some(mode) = &query.mode {
        let mode: PcaMode = serde_json::from_value(Value::String(mode.clone()))
            .map_err(|_| ApiError::bad_request(format!("unknown mode {mode:?} (covariance or correlation)")))?;
        block = block.mode(mode);
    }
    if let Some(fields) = &query.fields {
        block = block.fields(fields.split(',').map(str::trim).filter(|f| !f.is_empty()));
    }

    let store = state.store.clone();
    let report = blocking(move || {
        let dataset = store.load_dataset(&id)?;
        let spec = ReportSpec {
            id: id.clone(),
            source: ReportSource::Dataset(id),
            blocks: vec![block],
        };
        Ok(report::compose_report(&spec, SourceData::Dataset(&dataset))?)
    })
    .await?;
    let block = &report.blocks[0];
    if let BlockOutcome::Error { message } = &block.outcome {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "analysis", message.clone()));
    }
    let mut body = serde_json::to_string_pretty(block).map_err(|e| ApiError::internal(e.to_string()))?;
    body.push('\n');
    Ok(json_text(body))
}
