//! Run-controller HTTP API.
//!
//! Runs execute on blocking worker threads, at most `max_concurrent_runs`
//! at once. Each run's events are appended to
//! `<data_dir>/runs/<run_id>/events.jsonl` and streamed to subscribers over
//! server-sent events. Interrupts wait for a `POST /runs/{id}/decision`.

use crate::config::Config;
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use eclair_core::execute::{
    read_events, run_workflow, ChannelDecisions, Decision, DecisionKind, Event, EventBody, EventSink, Interrupt,
    RunDir, RunHooks, RunInputs, RunPolicy, RunStatus, EVENTS_FILE,
};
use eclair_core::fm::{Backend, Provider};
use eclair_core::model::{parse_sop, Sop, Workflow};
use eclair_core::sim::{fixtures, SimEnv};
use eclair_core::validate::Constraint;
use futures_util::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};
use tokio::sync::{watch, Semaphore};

pub const INDEX_FILE: &str = "index.json";
pub const SOP_FILE: &str = "sop.md";
/// Detail of runs found unfinished when the service starts.
pub const RESTART_DETAIL: &str = "service restarted before the run finished";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Index { path: PathBuf, message: String },
    #[error("token variable {0} is not set")]
    MissingToken(String),
    #[error(transparent)]
    Backend(#[from] eclair_core::fm::FmError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |source| ServiceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Persistent metadata of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub workflow: Workflow,
    /// SOP file inside the run directory, when the run has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sop: Option<String>,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub created_at_ms: u64,
    /// Event log, relative to the data directory.
    pub event_log: String,
}

struct RunHandle {
    record: Mutex<RunRecord>,
    events: Mutex<Vec<Event>>,
    /// Bumped after every event so streams wake up.
    notify: watch::Sender<u64>,
    open: Mutex<Option<Interrupt>>,
    decided: Mutex<HashMap<String, Decision>>,
    decisions: Mutex<Option<mpsc::Sender<Decision>>>,
    finished: AtomicBool,
}

impl RunHandle {
    fn new(record: RunRecord, events: Vec<Event>) -> Self {
        let last = events.last().map_or(0, |e| e.seq);
        Self {
            record: Mutex::new(record),
            events: Mutex::new(events),
            notify: watch::Sender::new(last),
            open: Mutex::new(None),
            decided: Mutex::new(HashMap::new()),
            decisions: Mutex::new(None),
            finished: AtomicBool::new(false),
        }
    }

    fn finish(&self) {
        self.finished.store(true, Ordering::SeqCst);
        self.decisions_tx().take();
        self.notify.send_modify(|v| *v += 1);
    }

    fn record(&self) -> MutexGuard<'_, RunRecord> {
        lock(&self.record)
    }

    fn decisions_tx(&self) -> MutexGuard<'_, Option<mpsc::Sender<Decision>>> {
        lock(&self.decisions)
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// What the service needs besides its data directory.
pub struct ServiceOptions {
    pub data_dir: PathBuf,
    pub max_concurrent_runs: usize,
    /// Bearer token required on every request when set.
    pub token: Option<String>,
    pub backend: Arc<dyn Backend>,
}

struct Shared {
    data_dir: PathBuf,
    token: Option<String>,
    backend: Arc<dyn Backend>,
    permits: Arc<Semaphore>,
    runs: Mutex<BTreeMap<String, Arc<RunHandle>>>,
    next_id: AtomicU64,
    index_lock: Mutex<()>,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    /// Opens the data directory. Runs that were still going when the
    /// previous process stopped are marked failed.
    pub fn open(options: ServiceOptions) -> Result<Self, ServiceError> {
        let dir = options.data_dir;
        std::fs::create_dir_all(dir.join("runs")).map_err(io_err(&dir))?;
        let index = dir.join(INDEX_FILE);
        let records: Vec<RunRecord> = match std::fs::read_to_string(&index) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| ServiceError::Index {
                path: index.clone(),
                message: e.to_string(),
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&index)(e)),
        };
        let mut runs = BTreeMap::new();
        let mut max_id = 0;
        for mut record in records {
            let log = dir.join(&record.event_log);
            let mut events = read_events(&log).unwrap_or_default();
            if let Some((status, detail)) = events.iter().rev().find_map(|e| match &e.body {
                EventBody::Status { status, detail } => Some((*status, detail.clone())),
                _ => None,
            }) {
                record.status = status;
                record.detail = detail;
            }
            if !record.status.is_terminal() {
                let event = Event {
                    seq: events.last().map_or(1, |e| e.seq + 1),
                    run_id: record.run_id.clone(),
                    ts_ms: events.last().map_or(0, |e| e.ts_ms),
                    body: EventBody::Status {
                        status: RunStatus::Failed,
                        detail: Some(RESTART_DETAIL.into()),
                    },
                };
                append_event(&log, &event)?;
                events.push(event);
                record.status = RunStatus::Failed;
                record.detail = Some(RESTART_DETAIL.into());
            }
            if let Some(n) = record.run_id.strip_prefix("run-").and_then(|n| n.parse::<u64>().ok()) {
                max_id = max_id.max(n);
            }
            let handle = RunHandle::new(record.clone(), events);
            handle.finished.store(true, Ordering::SeqCst);
            runs.insert(record.run_id, Arc::new(handle));
        }
        let state = AppState(Arc::new(Shared {
            data_dir: dir,
            token: options.token,
            backend: options.backend,
            permits: Arc::new(Semaphore::new(options.max_concurrent_runs.max(1))),
            runs: Mutex::new(runs),
            next_id: AtomicU64::new(max_id + 1),
            index_lock: Mutex::new(()),
        }));
        state.persist_index()?;
        Ok(state)
    }

    pub fn data_dir(&self) -> &Path {
        &self.0.data_dir
    }

    fn handle(&self, id: &str) -> Option<Arc<RunHandle>> {
        lock(&self.0.runs).get(id).cloned()
    }

    /// Rewrites the index through a temporary file.
    fn persist_index(&self) -> Result<(), ServiceError> {
        let _guard = lock(&self.0.index_lock);
        let records: Vec<RunRecord> = lock(&self.0.runs).values().map(|h| h.record().clone()).collect();
        let path = self.0.data_dir.join(INDEX_FILE);
        let tmp = self.0.data_dir.join(format!("{INDEX_FILE}.tmp"));
        let text = serde_json::to_string_pretty(&records).expect("records serialize");
        std::fs::write(&tmp, text).map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    fn persist_logged(&self) {
        if let Err(e) = self.persist_index() {
            tracing::error!("cannot write run index: {e}");
        }
    }
}

fn append_event(path: &Path, event: &Event) -> Result<(), ServiceError> {
    use std::io::Write;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let line = serde_json::to_string(event).expect("events serialize");
    writeln!(f, "{line}").map_err(io_err(path))
}

/// Publishes run events to the in-memory log and its subscribers.
struct HandleSink {
    state: AppState,
    handle: Arc<RunHandle>,
}

impl EventSink for HandleSink {
    fn emit(&mut self, event: &Event) {
        let mut status_changed = false;
        match &event.body {
            EventBody::Interrupt(i) => *lock(&self.handle.open) = Some(i.clone()),
            EventBody::Decision(_) => *lock(&self.handle.open) = None,
            EventBody::Status { status, detail } => {
                let mut r = self.handle.record();
                r.status = *status;
                r.detail = detail.clone();
                if status.is_terminal() {
                    *lock(&self.handle.open) = None;
                }
                status_changed = true;
            }
            _ => {}
        }
        if status_changed {
            self.state.persist_logged();
        }
        lock(&self.handle.events).push(event.clone());
        self.handle.notify.send_modify(|v| *v = event.seq);
    }
}

struct Job {
    workflow: Workflow,
    sop: Option<Sop>,
    constraints: Vec<Constraint>,
    policy: RunPolicy,
    env: Arc<eclair_core::sim::SiteSpec>,
}

/// Returns whether the record changed after the last status event.
fn execute_job(state: &AppState, handle: &Arc<RunHandle>, job: Job, decisions: mpsc::Receiver<Decision>) -> bool {
    let run_id = handle.record().run_id.clone();
    let root = state.0.data_dir.join("runs").join(&run_id);
    let mut sink = HandleSink {
        state: state.clone(),
        handle: handle.clone(),
    };
    let mut dir = match RunDir::create(&root, &job.workflow.id) {
        Ok(d) => d,
        Err(e) => {
            let event = Event {
                seq: 1,
                run_id,
                ts_ms: 0,
                body: EventBody::Status {
                    status: RunStatus::Failed,
                    detail: Some(format!("cannot create run directory: {e}")),
                },
            };
            sink.emit(&event);
            return false;
        }
    };
    let mut env = SimEnv::new(job.env);
    let mut source = ChannelDecisions(decisions);
    let result = run_workflow(
        &RunInputs {
            run_id: &run_id,
            workflow: &job.workflow,
            sop: job.sop.as_ref(),
            constraints: &job.constraints,
        },
        &mut env,
        state.0.backend.as_ref(),
        &job.policy,
        &mut RunHooks {
            events: &mut sink,
            decisions: &mut source,
            dir: Some(&mut dir),
        },
    );
    let mut r = handle.record();
    if r.status == result.status {
        return false;
    }
    r.status = result.status;
    r.detail = result.detail.clone();
    true
}

fn spawn_run(state: AppState, handle: Arc<RunHandle>, job: Job) {
    let (tx, rx) = mpsc::channel();
    *handle.decisions_tx() = Some(tx);
    tokio::spawn(async move {
        let permit = state.0.permits.clone().acquire_owned().await.expect("semaphore is never closed");
        let (s, h) = (state.clone(), handle.clone());
        let outcome = tokio::task::spawn_blocking(move || {
            let _permit = permit;
            execute_job(&s, &h, job, rx)
        })
        .await;
        let changed = outcome.unwrap_or_else(|e| {
            tracing::error!("run worker panicked: {e}");
            let mut r = handle.record();
            if !r.status.is_terminal() {
                r.status = RunStatus::Failed;
                r.detail = Some("run worker panicked".into());
            }
            true
        });
        if changed {
            state.persist_logged();
        }
        handle.finish();
    });
}

/// Error body: `{"code", "message", "field"?}`.
#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            field: None,
        }
    }

    fn field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message).field(field)
    }

    fn no_run(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "run_not_found", format!("no run {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

/// Parses a JSON body, reporting the path of the offending field.
fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let err = ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.inner().to_string());
        if path == "." {
            err
        } else {
            err.field(path)
        }
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkflowRef {
    id: String,
    #[serde(default)]
    description: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRun {
    workflow: WorkflowRef,
    /// Site fixture name.
    env: String,
    /// SOP markdown.
    #[serde(default)]
    sop: Option<String>,
    #[serde(default)]
    policy: RunPolicy,
    /// One constraint expression per SOP step. The fixture workflow's
    /// constraints are used when omitted.
    #[serde(default)]
    constraints: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub run_id: String,
    pub status: RunStatus,
}

async fn create_run(State(state): State<AppState>, body: axum::body::Bytes) -> Result<Response, ApiError> {
    let req: CreateRun = parse_body(&body)?;
    if req.workflow.id.trim().is_empty() {
        return Err(ApiError::invalid("workflow.id", "must not be empty"));
    }
    if let Some((field, message)) = req.policy.problems().into_iter().next() {
        return Err(ApiError::invalid(field, message));
    }
    let spec = fixtures::site(&req.env).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "env_not_found", format!("no environment named {:?}", req.env))
            .field("env")
    })?;
    let description = match (req.workflow.description, spec.workflow(&req.workflow.id)) {
        (Some(d), _) => d,
        (None, Some(w)) => w.description.clone(),
        (None, None) => {
            return Err(ApiError::invalid(
                "workflow.description",
                format!("{} does not define workflow {:?}; a description is required", req.env, req.workflow.id),
            ))
        }
    };
    let sop = match &req.sop {
        Some(text) => Some(parse_sop(text).map_err(|e| ApiError::invalid("sop", e.to_string()))?),
        None => None,
    };
    let constraints = match (&req.constraints, &sop) {
        (Some(_), None) => return Err(ApiError::invalid("constraints", "constraints need an sop")),
        (Some(list), Some(_)) => list
            .iter()
            .enumerate()
            .map(|(i, c)| c.parse::<Constraint>().map_err(|e| ApiError::invalid(format!("constraints[{i}]"), e.to_string())))
            .collect::<Result<Vec<_>, _>>()?,
        (None, Some(_)) => fixtures::constraints(&req.workflow.id).unwrap_or_default(),
        (None, None) => Vec::new(),
    };

    let n = state.0.next_id.fetch_add(1, Ordering::SeqCst);
    let run_id = format!("run-{n:06}");
    let root = state.0.data_dir.join("runs").join(&run_id);
    std::fs::create_dir_all(&root)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string()))?;
    if let Some(text) = &req.sop {
        std::fs::write(root.join(SOP_FILE), text)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string()))?;
    }
    let workflow = Workflow::new(req.workflow.id, description, req.env);
    let record = RunRecord {
        run_id: run_id.clone(),
        workflow: workflow.clone(),
        sop: req.sop.as_ref().map(|_| SOP_FILE.to_string()),
        status: RunStatus::Running,
        detail: None,
        created_at_ms: now_ms(),
        event_log: format!("runs/{run_id}/{EVENTS_FILE}"),
    };
    let handle = Arc::new(RunHandle::new(record, Vec::new()));
    lock(&state.0.runs).insert(run_id.clone(), handle.clone());
    state
        .persist_index()
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string()))?;
    spawn_run(
        state,
        handle,
        Job {
            workflow,
            sop,
            constraints,
            policy: req.policy,
            env: spec,
        },
    );
    let location = format!("/runs/{run_id}");
    Ok((
        StatusCode::ACCEPTED,
        [(header::LOCATION, location)],
        Json(Created {
            run_id,
            status: RunStatus::Running,
        }),
    )
        .into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunList {
    pub runs: Vec<RunRecord>,
}

async fn list_runs(State(state): State<AppState>) -> Json<RunList> {
    let runs = lock(&state.0.runs).values().map(|h| h.record().clone()).collect();
    Json(RunList { runs })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunView {
    #[serde(flatten)]
    pub record: RunRecord,
    /// Interrupt waiting for a decision.
    pub open_interrupt: Option<Interrupt>,
    pub event_count: usize,
}

async fn get_run(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<RunView>, ApiError> {
    let h = state.handle(&id).ok_or_else(|| ApiError::no_run(&id))?;
    let view = RunView {
        record: h.record().clone(),
        open_interrupt: lock(&h.open).clone(),
        event_count: lock(&h.events).len(),
    };
    Ok(Json(view))
}

#[derive(Debug, Deserialize)]
struct StreamQuery {
    #[serde(default)]
    last_event_id: Option<u64>,
}

fn sse_event(e: &Event) -> SseEvent {
    SseEvent::default()
        .id(e.seq.to_string())
        .event(e.body.kind())
        .data(serde_json::to_string(e).expect("events serialize"))
}

fn is_terminal(e: &Event) -> bool {
    matches!(&e.body, EventBody::Status { status, .. } if status.is_terminal())
}

fn event_stream(handle: Arc<RunHandle>, after: u64) -> impl Stream<Item = Result<SseEvent, Infallible>> {
    let rx = handle.notify.subscribe();
    stream::unfold((handle, after, rx, false), |(h, mut cursor, mut rx, done)| async move {
        if done {
            return None;
        }
        loop {
            let next = lock(&h.events).iter().find(|e| e.seq > cursor).cloned();
            if let Some(e) = next {
                cursor = e.seq;
                let end = is_terminal(&e);
                return Some((Ok(sse_event(&e)), (h, cursor, rx, end)));
            }
            if h.finished.load(Ordering::SeqCst) {
                return None;
            }
            if rx.changed().await.is_err() {
                return None;
            }
        }
    })
}

async fn stream_events(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<StreamQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let h = state.handle(&id).ok_or_else(|| ApiError::no_run(&id))?;
    let from_header = match headers.get("last-event-id") {
        Some(v) => Some(
            v.to_str()
                .ok()
                .and_then(|s| s.trim().parse::<u64>().ok())
                .ok_or_else(|| ApiError::invalid("Last-Event-ID", "must be an event sequence number"))?,
        ),
        None => None,
    };
    let after = from_header.or(q.last_event_id).unwrap_or(0);
    Ok(Sse::new(event_stream(h, after)).keep_alive(KeepAlive::default()).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    interrupt_id: String,
    decision: DecisionKind,
    #[serde(default)]
    note: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionReply {
    pub run_id: String,
    #[serde(flatten)]
    pub decision: Decision,
    /// The interrupt was already decided; `decision` is the first answer.
    pub duplicate: bool,
}

async fn post_decision(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: axum::body::Bytes,
) -> Result<Json<DecisionReply>, ApiError> {
    let body: DecisionBody = parse_body(&body)?;
    let h = state.handle(&id).ok_or_else(|| ApiError::no_run(&id))?;
    let reply = |decision: Decision, duplicate| {
        Json(DecisionReply {
            run_id: id.clone(),
            decision,
            duplicate,
        })
    };
    // Held across the check and the send so two posts cannot both deliver.
    let mut decided = lock(&h.decided);
    if let Some(first) = decided.get(&body.interrupt_id) {
        return Ok(reply(first.clone(), true));
    }
    let status = h.record().status;
    if status.is_terminal() {
        return Err(ApiError::new(
            StatusCode::GONE,
            "run_finished",
            format!("run {id} already ended with status {}", status.as_str()),
        ));
    }
    let open = lock(&h.open).clone();
    match open {
        Some(i) if i.interrupt_id == body.interrupt_id => {}
        _ => {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "no_open_interrupt",
                format!("run {id} is not waiting on interrupt {}", body.interrupt_id),
            )
            .field("interrupt_id"))
        }
    }
    let decision = Decision {
        interrupt_id: body.interrupt_id,
        decision: body.decision,
        note: body.note,
    };
    let sent = h.decisions_tx().as_ref().is_some_and(|tx| tx.send(decision.clone()).is_ok());
    if !sent {
        return Err(ApiError::new(StatusCode::GONE, "run_finished", format!("run {id} is no longer running")));
    }
    decided.insert(decision.interrupt_id.clone(), decision.clone());
    Ok(reply(decision, false))
}

#[derive(Debug, Deserialize)]
struct TokenQuery {
    #[serde(default)]
    access_token: Option<String>,
}

/// Bearer auth. `?access_token=` is accepted too since browser
/// `EventSource` cannot set headers.
async fn auth(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let Some(expected) = &state.0.token else {
        return next.run(req).await;
    };
    let bearer = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::to_string);
    let query = Query::<TokenQuery>::try_from_uri(req.uri()).ok().and_then(|q| q.0.access_token);
    let ok = [bearer, query].into_iter().flatten().any(|t| constant_time_eq(t.as_bytes(), expected.as_bytes()));
    if ok {
        next.run(req).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token").into_response()
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/runs", post(create_run).get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/events", get(stream_events))
        .route("/runs/{id}/decision", post(post_decision))
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state)
}

/// Service options from a config, reading the token from its variable.
pub fn options_from_config(
    config: &Config,
    provider: Option<Arc<dyn Provider>>,
) -> Result<ServiceOptions, ServiceError> {
    let token = match &config.service.token_env {
        Some(var) => Some(std::env::var(var).map_err(|_| ServiceError::MissingToken(var.clone()))?),
        None => None,
    };
    Ok(ServiceOptions {
        data_dir: config.service.data_dir.clone(),
        max_concurrent_runs: config.service.max_concurrent_runs,
        token,
        backend: config.fm.build(provider)?,
    })
}

/// Serves on 127.0.0.1:`port` until interrupted.
pub fn serve(config: &Config, provider: Option<Arc<dyn Provider>>, port: u16) -> Result<(), ServiceError> {
    let state = AppState::open(options_from_config(config, provider)?)?;
    let runtime = tokio::runtime::Runtime::new().map_err(io_err(Path::new("tokio runtime")))?;
    runtime.block_on(async move {
        let addr = std::net::SocketAddr::from(([127, 0, 0, 1], port));
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(io_err(Path::new("listener")))?;
        tracing::info!("listening on http://{addr}, data in {}", state.data_dir().display());
        eprintln!("listening on http://{addr}");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                tokio::signal::ctrl_c().await.ok();
            })
            .await
            .map_err(io_err(Path::new("listener")))
    })
}
