//! HTTP service: inquiry intake, the staff review queue, ratings, live
//! knowledge-base updates with background re-indexing, and metrics.
//!
//! State lives under the storage root:
//!
//! ```text
//! kb.jsonl              knowledge base (header + documents)
//! drafts.log            checksummed draft events
//! ratings.log           checksummed ratings
//! reports/report.json   latest evaluation report, if any
//! ```

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::mpsc::Receiver;
use std::sync::{Arc, Mutex, RwLock, Weak};
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::chunking::ChunkingParams;
use crate::config::{ConfigError, Settings};
use crate::corpus::{CorpusError, Document, KbEvent, KnowledgeBase, RedactionRule, SourceKind};
use crate::embedding::EmbeddingProvider;
use crate::evaluation::{cohens_kappa, EvaluationReport, ReviewRating};
use crate::generation::{run_pipeline, Citation, DraftStatus, GenerationError, GeneratorSet, Inquiry, PipelineConfig, PipelineName};
use crate::retrieval::{rebuild_index, IndexHandle, RetrievalError};
use crate::storage::EventLog;

pub const MAX_INQUIRY_CHARS: usize = 8_000;
const DEFAULT_PAGE: usize = 50;
const MAX_PAGE: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("storage: {0}")]
    Io(#[from] std::io::Error),
    #[error("storage root {0} is not writable")]
    StorageRoot(PathBuf),
    #[error("an API token is required (API_TOKEN or api_token)")]
    NoToken,
}

/// A draft as shown to reviewers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewQueueItem {
    pub draft_id: String,
    pub seq: u64,
    pub inquiry_id: String,
    pub inquiry_text: String,
    #[serde(default)]
    pub channel: Option<String>,
    pub config: PipelineName,
    pub response: String,
    pub citations: Vec<Citation>,
    pub status: DraftStatus,
    pub created_at: DateTime<Utc>,
    pub latency_ms: u64,
    pub index_watermark: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum DraftEvent {
    Created { item: ReviewQueueItem },
    Status { draft_id: String, status: DraftStatus },
}

/// In-memory view of the draft and rating logs.
struct Store {
    items: BTreeMap<u64, ReviewQueueItem>,
    by_id: HashMap<String, u64>,
    ratings: Vec<ReviewRating>,
    next_seq: u64,
    drafts_log: EventLog<DraftEvent>,
    ratings_log: EventLog<ReviewRating>,
}

impl Store {
    /// Replays both logs and rewrites them compacted.
    fn open(root: &Path) -> std::io::Result<Self> {
        let drafts_log = EventLog::new(root.join("drafts.log"));
        let ratings_log = EventLog::new(root.join("ratings.log"));
        let mut store = Store {
            items: BTreeMap::new(),
            by_id: HashMap::new(),
            ratings: Vec::new(),
            next_seq: 1,
            drafts_log,
            ratings_log,
        };
        for ev in store.drafts_log.load()?.records {
            store.apply(ev);
        }
        let mut seen = std::collections::HashSet::new();
        for r in store.ratings_log.load()?.records {
            if store.by_id.contains_key(&r.draft_id) && seen.insert((r.draft_id.clone(), r.rater_id.clone())) {
                store.ratings.push(r);
            }
        }
        let compacted: Vec<DraftEvent> =
            store.items.values().map(|item| DraftEvent::Created { item: item.clone() }).collect();
        store.drafts_log.rewrite(&compacted)?;
        store.ratings_log.rewrite(&store.ratings)?;
        Ok(store)
    }

    fn apply(&mut self, ev: DraftEvent) {
        match ev {
            DraftEvent::Created { item } => {
                self.next_seq = self.next_seq.max(item.seq + 1);
                self.by_id.insert(item.draft_id.clone(), item.seq);
                self.items.insert(item.seq, item);
            }
            DraftEvent::Status { draft_id, status } => {
                if let Some(item) = self.by_id.get(&draft_id).and_then(|s| self.items.get_mut(s)) {
                    item.status = status;
                }
            }
        }
    }

    fn reserve_seq(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    fn get(&self, draft_id: &str) -> Option<&ReviewQueueItem> {
        self.by_id.get(draft_id).and_then(|s| self.items.get(s))
    }

    fn set_status(&mut self, draft_id: &str, status: DraftStatus) -> std::io::Result<()> {
        let ev = DraftEvent::Status { draft_id: draft_id.to_string(), status };
        self.drafts_log.append(&ev)?;
        self.apply(ev);
        Ok(())
    }
}

/// Shared state behind the router.
pub struct AppState {
    settings: Settings,
    token: String,
    kb: Arc<RwLock<KnowledgeBase>>,
    rules: Vec<RedactionRule>,
    index: IndexHandle,
    store: Mutex<Store>,
    provider: Arc<dyn EmbeddingProvider>,
    generators: GeneratorSet,
    pipeline: PipelineConfig,
}

impl AppState {
    /// Opens (or initializes) the storage root, builds the initial index,
    /// and starts the background re-indexer.
    pub fn open(
        settings: Settings,
        provider: Arc<dyn EmbeddingProvider>,
        generators: GeneratorSet,
    ) -> Result<Arc<Self>, ServiceError> {
        let token = settings.api_token.clone().filter(|t| !t.is_empty()).ok_or(ServiceError::NoToken)?;
        let root = settings.storage_root.clone();
        std::fs::create_dir_all(root.join("reports")).map_err(|_| ServiceError::StorageRoot(root.clone()))?;
        let probe = root.join(".write-probe");
        std::fs::write(&probe, b"").map_err(|_| ServiceError::StorageRoot(root.clone()))?;
        let _ = std::fs::remove_file(probe);

        let params = settings.chunking()?;
        let rules = settings.rules()?;
        let mut kb = KnowledgeBase::open(root.join("kb.jsonl"), &settings.kb_id)?;
        kb.save(root.join("kb.jsonl"))?;
        let events = kb.subscribe();
        let snapshot = rebuild_index(&kb, &params, provider.as_ref())?;
        let index = IndexHandle::new(snapshot);
        let kb = Arc::new(RwLock::new(kb));
        spawn_reindexer(Arc::downgrade(&kb), events, index.clone(), params, provider.clone());

        let pipeline = PipelineConfig::new(settings.pipeline, &settings.models()).with_top_k(settings.top_k);
        let pipeline = PipelineConfig { params: settings.gen_params(), ..pipeline };
        Ok(Arc::new(AppState {
            store: Mutex::new(Store::open(&root)?),
            settings,
            token,
            kb,
            rules,
            index,
            provider,
            generators,
            pipeline,
        }))
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn kb_revision(&self) -> u64 {
        self.kb.read().expect("kb lock").kb_revision()
    }

    pub fn index_watermark(&self) -> u64 {
        self.index.watermark()
    }
}

/// Rebuilds the index after KB changes, coalescing bursts of events. Exits
/// when the knowledge base is dropped.
fn spawn_reindexer(
    kb: Weak<RwLock<KnowledgeBase>>,
    events: Receiver<KbEvent>,
    index: IndexHandle,
    params: ChunkingParams,
    provider: Arc<dyn EmbeddingProvider>,
) -> JoinHandle<()> {
    std::thread::Builder::new()
        .name("reindexer".into())
        .spawn(move || {
            while let Ok(first) = events.recv() {
                let latest = events.try_iter().last().unwrap_or(first).kb_revision();
                if latest <= index.watermark() {
                    continue;
                }
                let Some(kb) = kb.upgrade() else { break };
                let snapshot_kb = kb.read().expect("kb lock").clone();
                drop(kb);
                match rebuild_index(&snapshot_kb, &params, provider.as_ref()) {
                    Ok(snap) => {
                        tracing::info!(watermark = snap.watermark(), entries = snap.index().len(), "published index");
                        index.publish(snap);
                    }
                    Err(e) => tracing::error!(error = %e, "index rebuild failed; keeping previous index"),
                }
            }
        })
        .expect("spawn reindexer")
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn err(code: StatusCode, msg: impl Into<String>) -> ApiError {
    ApiError(code, msg.into())
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    tracing::error!(error = %e, "internal error");
    err(StatusCode::INTERNAL_SERVER_ERROR, "internal error")
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| err(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let ok = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == state.token);
    if ok {
        next.run(req).await
    } else {
        err(StatusCode::UNAUTHORIZED, "missing or invalid bearer token").into_response()
    }
}

#[derive(Deserialize)]
struct InquiryBody {
    text: String,
    #[serde(default)]
    channel: Option<String>,
    /// Optional caller-side identifier, e.g. a ticket number.
    #[serde(default)]
    inquiry_id: Option<String>,
}

#[derive(Serialize)]
struct InquiryCreated {
    draft_id: String,
    inquiry_id: String,
    response: String,
    citations: Vec<Citation>,
    config: PipelineName,
}

async fn post_inquiry(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let body: InquiryBody = parse_body(&body)?;
    if body.text.trim().is_empty() {
        return Err(err(StatusCode::BAD_REQUEST, "inquiry text is empty"));
    }
    if body.text.chars().count() > MAX_INQUIRY_CHARS {
        return Err(err(StatusCode::BAD_REQUEST, format!("inquiry exceeds {MAX_INQUIRY_CHARS} characters")));
    }
    let seq = state.store.lock().expect("store lock").reserve_seq();
    let inquiry_id = body.inquiry_id.clone().unwrap_or_else(|| format!("inq-{seq:06}"));
    let inquiry = Inquiry::new(inquiry_id, body.text.clone());

    let worker = state.clone();
    let draft = tokio::task::spawn_blocking(move || {
        let snapshot = worker.index.snapshot();
        let client = worker.generators.for_class(worker.pipeline.name.model_class());
        run_pipeline(&worker.pipeline, &inquiry, &snapshot, worker.provider.as_ref(), client)
    })
    .await
    .map_err(internal)?
    .map_err(|e| match e {
        GenerationError::UnknownTemplate(_) => internal(e),
        other => err(StatusCode::SERVICE_UNAVAILABLE, other.to_string()),
    })?;

    let item = ReviewQueueItem {
        draft_id: format!("dr-{seq:06}"),
        seq,
        inquiry_id: draft.inquiry_id,
        inquiry_text: body.text,
        channel: body.channel,
        config: draft.config_name,
        response: draft.response_text,
        citations: draft.citations,
        status: DraftStatus::PendingReview,
        created_at: draft.created_at,
        latency_ms: draft.latency_ms,
        index_watermark: draft.index_watermark,
    };
    {
        let mut store = state.store.lock().expect("store lock");
        let ev = DraftEvent::Created { item: item.clone() };
        store.drafts_log.append(&ev).map_err(internal)?;
        store.apply(ev);
    }
    let created = InquiryCreated {
        draft_id: item.draft_id,
        inquiry_id: item.inquiry_id,
        response: item.response,
        citations: item.citations,
        config: item.config,
    };
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

#[derive(Deserialize)]
struct DraftQuery {
    status: Option<String>,
    limit: Option<usize>,
    cursor: Option<u64>,
}

/// Newest first. When more items remain, `x-next-cursor` carries the value
/// to pass as `cursor` for the next page.
async fn list_drafts(State(state): State<Arc<AppState>>, Query(q): Query<DraftQuery>) -> Result<Response, ApiError> {
    let status = q
        .status
        .as_deref()
        .map(str::parse::<DraftStatus>)
        .transpose()
        .map_err(|e| err(StatusCode::BAD_REQUEST, e))?;
    let limit = q.limit.unwrap_or(DEFAULT_PAGE).clamp(1, MAX_PAGE);
    let store = state.store.lock().expect("store lock");
    let mut matching = store
        .items
        .range(..q.cursor.unwrap_or(u64::MAX))
        .rev()
        .map(|(_, item)| item)
        .filter(|item| status.map_or(true, |s| item.status == s));
    let page: Vec<ReviewQueueItem> = matching.by_ref().take(limit).cloned().collect();
    let more = matching.next().is_some();
    let mut headers = HeaderMap::new();
    if let (true, Some(last)) = (more, page.last()) {
        headers.insert("x-next-cursor", HeaderValue::from(last.seq));
    }
    Ok((headers, Json(page)).into_response())
}

#[derive(Serialize)]
struct DraftDetail {
    #[serde(flatten)]
    item: ReviewQueueItem,
    ratings: Vec<ReviewRating>,
}

async fn get_draft(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let store = state.store.lock().expect("store lock");
    let item = store.get(&id).cloned().ok_or_else(|| err(StatusCode::NOT_FOUND, "unknown draft"))?;
    let ratings = store.ratings.iter().filter(|r| r.draft_id == id).cloned().collect();
    Ok(Json(DraftDetail { item, ratings }).into_response())
}

#[derive(Deserialize)]
struct RatingBody {
    rater_id: String,
    score: i64,
    #[serde(default)]
    edited_text: Option<String>,
}

async fn post_rating(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<StatusCode, ApiError> {
    let body: RatingBody = parse_body(&body)?;
    let mut store = state.store.lock().expect("store lock");
    let status = store.get(&id).map(|i| i.status).ok_or_else(|| err(StatusCode::NOT_FOUND, "unknown draft"))?;
    if !(0..=2).contains(&body.score) {
        return Err(err(StatusCode::UNPROCESSABLE_ENTITY, "score must be 0, 1 or 2"));
    }
    if body.rater_id.trim().is_empty() {
        return Err(err(StatusCode::BAD_REQUEST, "rater_id is empty"));
    }
    if store.ratings.iter().any(|r| r.draft_id == id && r.rater_id == body.rater_id) {
        return Err(err(StatusCode::CONFLICT, "already rated by this rater"));
    }
    let rating = ReviewRating {
        draft_id: id.clone(),
        rater_id: body.rater_id,
        score: body.score as u8,
        edited_text: body.edited_text,
    };
    store.ratings_log.append(&rating).map_err(internal)?;
    store.ratings.push(rating);
    if status == DraftStatus::PendingReview {
        store.set_status(&id, DraftStatus::Rated).map_err(internal)?;
    }
    Ok(StatusCode::NO_CONTENT)
}

async fn mark_sent(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<StatusCode, ApiError> {
    let mut store = state.store.lock().expect("store lock");
    let status = store.get(&id).map(|i| i.status).ok_or_else(|| err(StatusCode::NOT_FOUND, "unknown draft"))?;
    if !status.can_become(DraftStatus::Sent) {
        return Err(err(StatusCode::CONFLICT, format!("draft is {}, only rated drafts can be sent", status.as_str())));
    }
    store.set_status(&id, DraftStatus::Sent).map_err(internal)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct DocumentBody {
    doc_id: String,
    source_kind: SourceKind,
    #[serde(default)]
    title: String,
    text: String,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

async fn upsert_document(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let body: DocumentBody = parse_body(&body)?;
    let doc = Document {
        doc_id: body.doc_id,
        source_kind: body.source_kind,
        title: body.title,
        text: body.text,
        metadata: body.metadata,
        revision: 0,
    };
    let worker = state.clone();
    let (doc_id, revision, kb_revision) = tokio::task::spawn_blocking(move || {
        let mut kb = worker.kb.write().expect("kb lock");
        let doc_id = doc.doc_id.clone();
        let revision = kb.upsert(doc, &worker.rules)?;
        Ok::<_, CorpusError>((doc_id, revision, kb.kb_revision()))
    })
    .await
    .map_err(internal)?
    .map_err(|e| match e {
        CorpusError::EmptyDocId | CorpusError::EmptyText(_) => err(StatusCode::BAD_REQUEST, e.to_string()),
        other => internal(other),
    })?;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "doc_id": doc_id, "revision": revision, "kb_revision": kb_revision })),
    )
        .into_response())
}

async fn kb_status(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let (kb_revision, documents) = {
        let kb = state.kb.read().expect("kb lock");
        (kb.kb_revision(), kb.len())
    };
    let snap = state.index.snapshot();
    Json(json!({
        "kb_revision": kb_revision,
        "index_watermark": snap.watermark(),
        "documents": documents,
        "index_entries": snap.index().len(),
    }))
}

async fn latest_report(State(state): State<Arc<AppState>>) -> Result<Json<EvaluationReport>, ApiError> {
    let path = state.settings.storage_root.join("reports").join("report.json");
    let raw = match std::fs::read(&path) {
        Ok(r) => r,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(err(StatusCode::NOT_FOUND, "no report yet")),
        Err(e) => return Err(internal(e)),
    };
    serde_json::from_slice(&raw).map(Json).map_err(internal)
}

async fn kappa(State(state): State<Arc<AppState>>) -> Result<Json<serde_json::Value>, ApiError> {
    let [ra, rb] = &state.settings.raters;
    let store = state.store.lock().expect("store lock");
    let mut by_draft: BTreeMap<&str, [Option<u8>; 2]> = BTreeMap::new();
    for r in &store.ratings {
        let slot = if &r.rater_id == ra {
            0
        } else if &r.rater_id == rb {
            1
        } else {
            continue;
        };
        by_draft.entry(r.draft_id.as_str()).or_default()[slot] = Some(r.score);
    }
    let (a, b): (Vec<u8>, Vec<u8>) = by_draft
        .values()
        .filter_map(|pair| Some((pair[0]?, pair[1]?)))
        .unzip();
    if a.len() < 2 {
        return Err(err(StatusCode::CONFLICT, "insufficient ratings"));
    }
    let k = cohens_kappa(&a, &b).map_err(internal)?;
    Ok(Json(json!({ "kappa": k, "n": a.len(), "raters": [ra, rb] })))
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/inquiries", post(post_inquiry))
        .route("/drafts", get(list_drafts))
        .route("/drafts/:id", get(get_draft))
        .route("/drafts/:id/rating", post(post_rating))
        .route("/drafts/:id/sent", post(mark_sent))
        .route("/kb/documents", post(upsert_document))
        .route("/kb/status", get(kb_status))
        .route("/metrics/report", get(latest_report))
        .route("/metrics/kappa", get(kappa))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .nest("/v1", api)
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&state.settings.listen_addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// A server running on its own runtime thread, for tests and examples.
pub struct RunningServer {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl RunningServer {
    /// Binds `127.0.0.1:0` and serves `state` in the background.
    pub fn start(state: Arc<AppState>) -> std::io::Result<Self> {
        let std_listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener)?;
                axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
            })
        });
        Ok(RunningServer { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown_inner()
    }

    fn shutdown_inner(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        let _ = self.shutdown_inner();
    }
}
