//! JSON-over-HTTP service: harvesting, catalog browsing, comparison, file
//! location, download manifests, FAIR audits and session-scoped chat.
//!
//! Errors are returned as `{"error_code", "message", "details"}`. Every
//! handler that touches the catalog or a provider runs on the blocking pool;
//! catalog mutations go through one write lock, and each chat session has
//! its own lock so queries within a session are applied in arrival order.

mod audit;
mod manifest;

pub use audit::{audit_dataset, dataset_subgraph, FairAudit, FairCheck, Principle};
pub use manifest::{build_manifest, render_script, sh_quote, DownloadManifest, ManifestEntry, NO_CHECKSUM};

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{SecondsFormat, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::catalog::{prepare_harvest, prepare_record, Catalog, CatalogError, HarvestOutcome};
use crate::graph::{compare, dataset_profile, locate_files, QueryError, DATASET_LABEL};
use crate::harvester::{Fetcher, HarvestError, KeywordRule};
use crate::retrieval::{
    answer, AnswerMode, CompletionProvider, EmbeddingProvider, HashingEmbedder, HttpCompleter, HttpEmbedder, Intent,
    Knowledge, RetrievalError, Source,
};

/// Service configuration file (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub store_path: Option<PathBuf>,
    pub port: u16,
    /// Embedding service base URL; the offline hashing embedder when absent.
    pub embedding_endpoint: Option<String>,
    pub completion_endpoint: Option<String>,
    pub top_k: usize,
    pub chunk_tokens: usize,
    pub chunk_overlap: usize,
    /// Appended to the builtin keyword rules.
    pub keyword_rules: Vec<KeywordRule>,
    pub provider_timeout_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            store_path: None,
            port: 8080,
            embedding_endpoint: None,
            completion_endpoint: None,
            top_k: 3,
            chunk_tokens: 300,
            chunk_overlap: 50,
            keyword_rules: Vec::new(),
            provider_timeout_secs: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
    pub sources: Vec<Source>,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub created_at: String,
    pub messages: Vec<Message>,
}

type SessionHandle = Arc<tokio::sync::Mutex<Session>>;

pub struct AppState {
    pub catalog: RwLock<Catalog>,
    sessions: RwLock<HashMap<String, SessionHandle>>,
    pub fetcher: Fetcher,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub completer: Option<Arc<dyn CompletionProvider>>,
    pub top_k: usize,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl AppState {
    pub fn new(
        catalog: Catalog,
        embedder: Arc<dyn EmbeddingProvider>,
        completer: Option<Arc<dyn CompletionProvider>>,
        fetcher: Fetcher,
        top_k: usize,
    ) -> Self {
        AppState {
            catalog: RwLock::new(catalog),
            sessions: RwLock::new(HashMap::new()),
            fetcher,
            embedder,
            completer,
            top_k: top_k.max(1),
        }
    }

    /// Builds providers and opens the store named in the configuration.
    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, CatalogError> {
        let timeout = Duration::from_secs(cfg.provider_timeout_secs.max(1));
        let embedder: Arc<dyn EmbeddingProvider> = match &cfg.embedding_endpoint {
            Some(e) => Arc::new(HttpEmbedder::new(e, timeout)),
            None => Arc::new(HashingEmbedder),
        };
        let completer: Option<Arc<dyn CompletionProvider>> = cfg
            .completion_endpoint
            .as_deref()
            .map(|e| Arc::new(HttpCompleter::new(e, timeout)) as Arc<dyn CompletionProvider>);
        let mut catalog = match &cfg.store_path {
            Some(p) => Catalog::open(p, cfg.keyword_rules.clone(), embedder.as_ref())?,
            None => Catalog::new(cfg.keyword_rules.clone())?,
        };
        catalog.chunking = crate::retrieval::ChunkConfig { tokens: cfg.chunk_tokens, overlap: cfg.chunk_overlap };
        Ok(AppState::new(catalog, embedder, completer, Fetcher::with_timeout(timeout), cfg.top_k))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub error_code: String,
    pub message: String,
    pub details: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>, details: Value) -> Self {
        ApiError { status: status.as_u16(), error_code: code.to_string(), message: message.into(), details }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        let msg = e.to_string();
        match e {
            QueryError::DatasetNotFound(dois) => {
                ApiError::new(StatusCode::NOT_FOUND, "DatasetNotFound", msg, json!({ "dois": dois }))
            }
            QueryError::TooFewDatasets(n) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "TooFewDatasets", msg, json!({ "count": n }))
            }
            QueryError::UnknownFacet(f) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "UnknownFacet", msg, json!({ "facet": f }))
            }
            QueryError::UnknownLabel(l) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "UnknownLabel", msg, json!({ "label": l }))
            }
        }
    }
}

impl From<RetrievalError> for ApiError {
    fn from(e: RetrievalError) -> Self {
        let msg = e.to_string();
        match e {
            RetrievalError::AmbiguousComparison(_) => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "AmbiguousComparison",
                msg,
                json!({ "hint": "Name the specific datasets to compare, e.g. \"Compare the robot model of <dataset A> and <dataset B>\"." }),
            ),
            RetrievalError::Provider { chunk_id, .. } => {
                ApiError::new(StatusCode::BAD_GATEWAY, "ProviderError", msg, json!({ "chunk_id": chunk_id }))
            }
            RetrievalError::Query(q) => q.into(),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "RetrievalError", other.to_string(), Value::Null),
        }
    }
}

impl From<CatalogError> for ApiError {
    fn from(e: CatalogError) -> Self {
        let msg = e.to_string();
        let st = |s: StatusCode, code: &str| ApiError::new(s, code, msg.clone(), Value::Null);
        match e {
            CatalogError::Harvest(h) => match h {
                HarvestError::Network(_) => st(StatusCode::BAD_GATEWAY, "NetworkError"),
                HarvestError::MalformedResponse(_) | HarvestError::MissingIdentifier | HarvestError::MissingTitle => {
                    st(StatusCode::BAD_GATEWAY, "MalformedResponse")
                }
                HarvestError::NotFound(_) => st(StatusCode::NOT_FOUND, "NotFound"),
                HarvestError::InvalidDoi(_) => st(StatusCode::NOT_FOUND, "InvalidDoi"),
                HarvestError::InvalidFilePath(_) => st(StatusCode::BAD_GATEWAY, "MalformedResponse"),
                HarvestError::SchemaViolation(_) => st(StatusCode::CONFLICT, "SchemaViolation"),
                HarvestError::Graph(_) => st(StatusCode::INTERNAL_SERVER_ERROR, "GraphError"),
            },
            CatalogError::Report(_) | CatalogError::Naming(_) => st(StatusCode::UNPROCESSABLE_ENTITY, "InvalidReport"),
            CatalogError::ReportMismatch { .. } => st(StatusCode::UNPROCESSABLE_ENTITY, "ReportMismatch"),
            CatalogError::DatasetNotFound(d) => {
                ApiError::new(StatusCode::NOT_FOUND, "DatasetNotFound", msg, json!({ "dois": [d] }))
            }
            CatalogError::Retrieval(r) => r.into(),
            CatalogError::Schema(_) | CatalogError::Rules(_) => st(StatusCode::CONFLICT, "SchemaViolation"),
            CatalogError::Graph(_) | CatalogError::Io { .. } => st(StatusCode::INTERNAL_SERVER_ERROR, "StorageError"),
        }
    }
}

fn bad_json(e: JsonRejection) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "BadRequest", e.body_text(), Value::Null)
}

fn session_not_found(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "SessionNotFound", format!("no session {id}"), json!({ "session_id": id }))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string(), Value::Null))?
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/query", post(query_session))
        .route("/harvest", post(harvest))
        .route("/datasets", get(list_datasets))
        .route("/datasets/{doi}", get(get_dataset))
        .route("/datasets/{doi}/files", get(dataset_files))
        .route("/datasets/{doi}/manifest", get(dataset_manifest))
        .route("/compare", post(compare_datasets))
        .route("/audit/{doi}", get(audit))
        .route("/schema", get(schema))
        .with_state(state)
}

/// Binds and serves until the process is stopped.
pub async fn serve(state: Shared, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state)).await
}

async fn create_session(State(st): State<Shared>) -> impl IntoResponse {
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = Session { id: id.clone(), created_at: now(), messages: Vec::new() };
    st.sessions.write().insert(id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
    (StatusCode::CREATED, Json(json!({ "session_id": id })))
}

fn session_handle(st: &AppState, id: &str) -> Result<SessionHandle, ApiError> {
    st.sessions.read().get(id).cloned().ok_or_else(|| session_not_found(id))
}

async fn get_session(State(st): State<Shared>, Path(id): Path<String>) -> Result<Json<Session>, ApiError> {
    let h = session_handle(&st, &id)?;
    let s = h.lock().await.clone();
    Ok(Json(s))
}

#[derive(Debug, Deserialize)]
struct QueryBody {
    text: String,
    #[serde(default)]
    mode: AnswerMode,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueryReply {
    pub answer: String,
    pub sources: Vec<Source>,
    pub intent: Intent,
    pub empty: bool,
    pub mode: AnswerMode,
}

async fn query_session(
    State(st): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<QueryBody>, JsonRejection>,
) -> Result<Json<QueryReply>, ApiError> {
    let handle = session_handle(&st, &id)?;
    let Json(body) = body.map_err(bad_json)?;
    let mut session = handle.lock().await;
    let text = body.text.clone();
    let state = st.clone();
    let ans = blocking(move || {
        let c = state.catalog.read();
        let k = Knowledge {
            graph: &c.graph,
            schema: &c.schema,
            index: &c.index,
            embedder: state.embedder.as_ref(),
            completer: state.completer.as_deref(),
            top_k: state.top_k,
        };
        answer(&text, &k, body.mode).map_err(ApiError::from)
    })
    .await?;
    session.messages.push(Message { role: Role::User, text: body.text, sources: vec![], timestamp: now() });
    session.messages.push(Message {
        role: Role::System,
        text: ans.text.clone(),
        sources: ans.sources.clone(),
        timestamp: now(),
    });
    Ok(Json(QueryReply {
        answer: ans.text,
        sources: ans.sources,
        intent: ans.intent,
        empty: ans.empty,
        mode: ans.mode,
    }))
}

#[derive(Debug, Deserialize)]
struct HarvestBody {
    repo: String,
    doi: String,
    /// Data report text.
    report: Option<String>,
}

async fn harvest(
    State(st): State<Shared>,
    body: Result<Json<HarvestBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(body) = body.map_err(bad_json)?;
    let outcome: HarvestOutcome = blocking(move || {
        let (rules, chunking) = {
            let c = st.catalog.read();
            (c.rules.clone(), c.chunking)
        };
        let doc = st.fetcher.fetch_record(&body.repo, &body.doi).map_err(CatalogError::from)?;
        let (record, report) = prepare_record(&doc, &body.repo, body.report.as_deref())?;
        let prepared = prepare_harvest(&rules, chunking, record, body.report.clone(), report, st.embedder.as_ref())?;
        let mut c = st.catalog.write();
        let outcome = c.apply(prepared)?;
        c.save()?;
        Ok(outcome)
    })
    .await?;
    let status = if outcome.summary.created_anything() { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(outcome.summary)).into_response())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetListing {
    pub doi: String,
    pub title: String,
}

async fn list_datasets(State(st): State<Shared>) -> Json<Vec<DatasetListing>> {
    let c = st.catalog.read();
    let mut v: Vec<DatasetListing> = c
        .graph
        .nodes_with_label(DATASET_LABEL)
        .map(|n| DatasetListing {
            doi: n.str_property("doi").unwrap_or(&n.key).to_string(),
            title: n.str_property("title").unwrap_or_default().to_string(),
        })
        .collect();
    v.sort_by(|a, b| a.doi.cmp(&b.doi));
    Json(v)
}

async fn get_dataset(State(st): State<Shared>, Path(doi): Path<String>) -> Result<Response, ApiError> {
    let c = st.catalog.read();
    let profile = dataset_profile(&c.graph, &doi)?;
    Ok(Json(profile).into_response())
}

fn split_filters(mut q: BTreeMap<String, String>) -> (BTreeMap<String, String>, Option<String>) {
    let format = q.remove("format");
    (q, format)
}

async fn dataset_files(
    State(st): State<Shared>,
    Path(doi): Path<String>,
    Query(filters): Query<BTreeMap<String, String>>,
) -> Result<Response, ApiError> {
    let c = st.catalog.read();
    let files: Vec<Value> = locate_files(&c.graph, &doi, &filters)?
        .into_iter()
        .map(|f| serde_json::to_value(&f.properties).expect("properties serialize"))
        .collect();
    Ok(Json(files).into_response())
}

async fn dataset_manifest(
    State(st): State<Shared>,
    Path(doi): Path<String>,
    Query(query): Query<BTreeMap<String, String>>,
) -> Result<Response, ApiError> {
    let (filters, format) = split_filters(query);
    let manifest = {
        let c = st.catalog.read();
        build_manifest(&c.graph, &doi, &filters, Utc::now())?
    };
    match format.as_deref() {
        None | Some("json") => Ok(Json(manifest).into_response()),
        Some("sh") => {
            Ok(([(header::CONTENT_TYPE, "text/x-shellscript; charset=utf-8")], render_script(&manifest))
                .into_response())
        }
        Some(other) => Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "UnknownFormat",
            format!("unknown manifest format {other}"),
            json!({ "supported": ["json", "sh"] }),
        )),
    }
}

#[derive(Debug, Deserialize)]
struct CompareBody {
    dois: Vec<String>,
    facets: Option<Vec<String>>,
}

async fn compare_datasets(
    State(st): State<Shared>,
    body: Result<Json<CompareBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(body) = body.map_err(bad_json)?;
    let c = st.catalog.read();
    let table = compare(&c.graph, &c.schema, &body.dois, body.facets.as_deref())?;
    Ok(Json(table).into_response())
}

async fn audit(State(st): State<Shared>, Path(doi): Path<String>) -> Result<Json<FairAudit>, ApiError> {
    let c = st.catalog.read();
    Ok(Json(audit_dataset(&c.graph, &c.schema, &doi)?))
}

async fn schema(State(st): State<Shared>) -> Response {
    let body = st.catalog.read().schema.to_canonical_json();
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}
