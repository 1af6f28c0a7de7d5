use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use patexpand_core::corpus::normalize_term;
use patexpand_core::crowd::{expand_with_crowd, CrowdError, CrowdSuggestion, Direction, Vote, VoteStore};
use patexpand_core::expansion::{ExpansionError, ExpansionRequest, SkippedTerm, Suggestion};
use patexpand_core::UnitCode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::query::search_string;
use crate::registry::{ModelInfo, ModelRegistry, ScanFailure};

pub const USER_HEADER: &str = "x-user";

pub struct AppState {
    pub registry: ModelRegistry,
    pub votes: Arc<VoteStore>,
    pub default_k: usize,
}

/// A JSON error body `{"error": {"code", "message"}}` with a status.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn internal() -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "internal error")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<CrowdError> for ApiError {
    fn from(e: CrowdError) -> Self {
        match e {
            CrowdError::Rejected(msg) => Self::bad_request(msg),
            other => {
                tracing::error!(error = %other, "vote store failure");
                Self::internal()
            }
        }
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

fn parse_query<T>(query: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    query
        .map(|Query(q)| q)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

/// The body's `user` field, else the `X-User` header.
fn resolve_user(explicit: Option<String>, headers: &HeaderMap) -> Result<String, ApiError> {
    explicit
        .filter(|u| !u.trim().is_empty())
        .or_else(|| {
            headers
                .get(USER_HEADER)
                .and_then(|v| v.to_str().ok())
                .map(str::to_owned)
                .filter(|u| !u.trim().is_empty())
        })
        .map(|u| u.trim().to_owned())
        .ok_or_else(|| ApiError::bad_request("user is required (body field or X-User header)"))
}

pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/models", get(list_models))
        .route("/api/models/rescan", post(rescan))
        .route("/api/expand", post(expand_handler))
        .route("/api/votes", post(post_vote).get(get_votes))
        .route("/api/terms", post(post_term))
        .route("/api/crowd", get(get_crowd))
        .route("/api/search-string", post(post_search_string))
        .route("/api/{*rest}", get(api_not_found).post(api_not_found))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn list_models(State(state): State<Arc<AppState>>) -> Json<Vec<ModelInfo>> {
    Json(state.registry.current().list())
}

#[derive(Serialize)]
struct RescanResponse {
    models: Vec<ModelInfo>,
    failures: Vec<ScanFailure>,
}

async fn rescan(State(state): State<Arc<AppState>>) -> ApiResult<RescanResponse> {
    let st = state.clone();
    let failures = tokio::task::spawn_blocking(move || st.registry.rescan())
        .await
        .map_err(|_| ApiError::internal())?
        .map_err(|e| {
            tracing::error!(error = %e, "rescan failed");
            ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "model_dir_unavailable", "model directory is unreadable")
        })?;
    Ok(Json(RescanResponse {
        models: state.registry.current().list(),
        failures,
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpandBody {
    model_id: String,
    #[serde(default)]
    #[allow(dead_code)]
    user: Option<String>,
    terms: Vec<String>,
    k: Option<usize>,
    include_crowd: Option<bool>,
    #[serde(default)]
    exclude: BTreeSet<String>,
    scope: Option<UnitCode>,
}

/// The request as executed: normalized, with the effective defaults.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct EffectiveRequest {
    pub model_id: String,
    /// Normalized terms in canonical order; the ranking does not depend on
    /// their order.
    pub terms: Vec<String>,
    pub exclude: Vec<String>,
    pub k: usize,
    pub include_crowd: bool,
    pub crowd_scope: Option<UnitCode>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ExpandResponse {
    pub request: EffectiveRequest,
    pub suggestions: Vec<Suggestion>,
    pub skipped_terms: Vec<SkippedTerm>,
}

async fn expand_handler(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<ExpandResponse> {
    let body: ExpandBody = parse_body(&body)?;
    let models = state.registry.current();
    let entry = models
        .get(&body.model_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_model", format!("no model `{}`", body.model_id)))?;
    let model = &entry.model;

    let request = ExpansionRequest {
        terms: body.terms,
        k: body.k.unwrap_or(state.default_k),
        exclude: body.exclude,
    };
    let normalized = request
        .normalized_terms()
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let include_crowd = body.include_crowd.unwrap_or(true);
    let crowd_scope = body.scope.or_else(|| model.scope().crowd_code().cloned());

    let crowd: Vec<CrowdSuggestion> = match (&crowd_scope, normalized.first()) {
        (Some(scope), Some(query)) if include_crowd && !query.is_empty() => {
            state.votes.crowd_suggestions(scope, query)
        }
        _ => Vec::new(),
    };
    let expansion = expand_with_crowd(model, &request, crowd).map_err(|e| match e {
        ExpansionError::InvalidRequest(msg) => ApiError::bad_request(msg),
        ExpansionError::NotRepresentable(_) => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "not_representable", e.to_string())
        }
        ExpansionError::Embedding(inner) => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "not_representable", inner.to_string())
        }
    })?;

    Ok(Json(ExpandResponse {
        request: EffectiveRequest {
            model_id: body.model_id,
            terms: canonical_terms(&normalized),
            exclude: request.exclude.iter().map(|e| normalize_term(e)).collect(),
            k: request.k,
            include_crowd,
            crowd_scope,
        },
        suggestions: expansion.suggestions,
        skipped_terms: expansion.skipped,
    }))
}

fn canonical_terms(normalized: &[String]) -> Vec<String> {
    let set: BTreeSet<&String> = normalized.iter().filter(|t| !t.is_empty()).collect();
    set.into_iter().cloned().collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VoteBody {
    user: Option<String>,
    scope: UnitCode,
    query_term: String,
    term: String,
    direction: Direction,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct SeqResponse {
    pub seq: u64,
}

async fn record(state: &Arc<AppState>, vote: Vote) -> ApiResult<SeqResponse> {
    let votes = state.votes.clone();
    let record = tokio::task::spawn_blocking(move || votes.record_vote(vote))
        .await
        .map_err(|_| ApiError::internal())??;
    Ok(Json(SeqResponse { seq: record.seq }))
}

async fn post_vote(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<SeqResponse> {
    let body: VoteBody = parse_body(&body)?;
    let user = resolve_user(body.user, &headers)?;
    let vote = Vote::new(&user, &body.scope, &body.query_term, &body.term, body.direction);
    record(&state, vote).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TermBody {
    user: Option<String>,
    scope: UnitCode,
    query_term: String,
    term: String,
}

async fn post_term(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<SeqResponse> {
    let body: TermBody = parse_body(&body)?;
    let user = resolve_user(body.user, &headers)?;
    let mut vote = Vote::new(&user, &body.scope, &body.query_term, &body.term, Direction::Up);
    vote.manual = true;
    record(&state, vote).await
}

#[derive(Deserialize)]
struct VotesQuery {
    user: Option<String>,
    scope: UnitCode,
    query_term: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct UserVote {
    pub term: String,
    pub direction: Direction,
    pub manual: bool,
    pub seq: u64,
    pub ts: DateTime<Utc>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct VotesResponse {
    pub user: String,
    pub scope: UnitCode,
    pub query_term: String,
    pub votes: Vec<UserVote>,
}

async fn get_votes(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    query: Result<Query<VotesQuery>, QueryRejection>,
) -> ApiResult<VotesResponse> {
    let query = parse_query(query)?;
    let user = resolve_user(query.user, &headers)?;
    let query_term = normalize_term(&query.query_term);
    let votes = state
        .votes
        .read(|crowd| crowd.user_votes(&user, &query.scope, &query_term))
        .into_iter()
        .map(|(term, v)| UserVote {
            term,
            direction: if v.up { Direction::Up } else { Direction::Down },
            manual: v.manual,
            seq: v.seq,
            ts: v.ts,
        })
        .collect();
    Ok(Json(VotesResponse {
        user,
        scope: query.scope,
        query_term,
        votes,
    }))
}

#[derive(Deserialize)]
struct CrowdQuery {
    scope: UnitCode,
    query_term: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct CrowdResponse {
    pub scope: UnitCode,
    pub query_term: String,
    pub suggestions: Vec<CrowdEntry>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct CrowdEntry {
    pub term: String,
    pub net_votes: i64,
    pub manual: bool,
}

async fn get_crowd(
    State(state): State<Arc<AppState>>,
    query: Result<Query<CrowdQuery>, QueryRejection>,
) -> ApiResult<CrowdResponse> {
    let query = parse_query(query)?;
    let query_term = normalize_term(&query.query_term);
    let suggestions = state
        .votes
        .crowd_suggestions(&query.scope, &query_term)
        .into_iter()
        .map(|c| CrowdEntry {
            term: c.term,
            net_votes: c.net_votes,
            manual: c.manual,
        })
        .collect();
    Ok(Json(CrowdResponse {
        scope: query.scope,
        query_term,
        suggestions,
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchStringBody {
    base_term: String,
    #[serde(default)]
    selected: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct SearchStringResponse {
    pub query: String,
}

async fn post_search_string(body: Bytes) -> ApiResult<SearchStringResponse> {
    let body: SearchStringBody = parse_body(&body)?;
    let query = search_string(&body.base_term, &body.selected)
        .ok_or_else(|| ApiError::bad_request("base_term must not be empty"))?;
    Ok(Json(SearchStringResponse { query }))
}
