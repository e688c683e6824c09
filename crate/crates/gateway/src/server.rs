//! HTTP surface: session lifecycle, NDJSON event streams, transcripts and
//! the idle ticker.

use std::collections::HashMap;
use std::convert::Infallible;
use std::future::Future;
use std::net::SocketAddr;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{info, warn};
use pacing_core::backend::ChatBackend;
use pacing_core::classifier::{RemoteClassifier, RuleClassifier};
use pacing_core::exec::{execute_plan, Clock, Completion, EventSink, SinkClosed, WallClock};
use pacing_core::generator::LlmGenerator;
use pacing_core::memory::{write_transcript, CharQuarterEstimator, ExtractiveSummarizer};
use pacing_core::prompts::Persona;
use pacing_core::scheduler::EmissionEvent;
use pacing_core::session::{create_session, BackendKind, Backends, Session, SessionConfig, SessionError, TurnOutput};
use pacing_core::wire::{ControlRecord, WireRecord};
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::watch;
use tokio::task::JoinHandle;

use crate::remote::{HttpChatBackend, RemoteConfig};

const NDJSON: &str = "application/x-ndjson";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Session settings used where a POST /sessions body is silent.
    pub defaults: SessionConfig,
    pub remote: Option<RemoteConfig>,
    pub idle_poll: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { defaults: SessionConfig::default(), remote: None, idle_poll: Duration::from_millis(250) }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct LogState {
    len: usize,
    closed: bool,
}

/// One live session plus its append-only wire log.
pub struct SessionHandle {
    session: Mutex<Session>,
    log: Mutex<Vec<String>>,
    state: watch::Sender<LogState>,
    busy: AtomicBool,
    cancel: AtomicBool,
}

impl SessionHandle {
    fn new(session: Session) -> Self {
        SessionHandle {
            session: Mutex::new(session),
            log: Mutex::new(Vec::new()),
            state: watch::Sender::new(LogState::default()),
            busy: AtomicBool::new(false),
            cancel: AtomicBool::new(false),
        }
    }

    fn append(&self, record: &WireRecord) {
        let mut log = self.log.lock().expect("log lock");
        log.push(record.to_line());
        let len = log.len();
        self.state.send_modify(|s| s.len = len);
    }

    fn read_from(&self, idx: usize) -> (Vec<String>, bool) {
        let closed = self.state.borrow().closed;
        let log = self.log.lock().expect("log lock");
        (log.get(idx..).map(<[String]>::to_vec).unwrap_or_default(), closed)
    }

    fn close(&self) {
        self.state.send_modify(|s| s.closed = true);
    }

    /// Wire lines written so far.
    pub fn lines(&self) -> Vec<String> {
        self.log.lock().expect("log lock").clone()
    }
}

struct LogSink<'a>(&'a SessionHandle);

impl EventSink for LogSink<'_> {
    fn deliver(&mut self, _at_ms: u64, event: &EmissionEvent) -> Result<(), SinkClosed> {
        if self.0.state.borrow().closed {
            return Err(SinkClosed);
        }
        self.0.append(&WireRecord::Event(event.clone()));
        Ok(())
    }

    fn cancelled(&mut self, _at_ms: u64) -> Result<(), SinkClosed> {
        self.0.append(&ControlRecord::Cancelled.into());
        Ok(())
    }
}

/// Sleeps in short steps so a cancel flag interrupts long silences.
struct Interruptible<'a> {
    inner: &'a dyn Clock,
    cancel: &'a AtomicBool,
}

impl Clock for Interruptible<'_> {
    fn now_ms(&self) -> u64 {
        self.inner.now_ms()
    }

    fn sleep_until(&self, t_ms: u64) {
        while !self.cancel.load(Ordering::Acquire) && self.inner.now_ms() < t_ms {
            self.inner.sleep_until(t_ms.min(self.inner.now_ms() + 20));
        }
    }
}

struct Inner {
    sessions: Mutex<HashMap<String, Arc<SessionHandle>>>,
    clock: Arc<dyn Clock>,
    config: ServerConfig,
    remote: Option<Arc<dyn ChatBackend>>,
    shutting_down: AtomicBool,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(config: ServerConfig, clock: Arc<dyn Clock>) -> Self {
        let remote = config.remote.clone().map(|c| Arc::new(HttpChatBackend::new(c)) as Arc<dyn ChatBackend>);
        Self::with_remote_backend(config, clock, remote)
    }

    /// Like [`AppState::new`] with an explicit backend for REMOTE sessions.
    pub fn with_remote_backend(
        config: ServerConfig,
        clock: Arc<dyn Clock>,
        remote: Option<Arc<dyn ChatBackend>>,
    ) -> Self {
        AppState {
            inner: Arc::new(Inner {
                sessions: Mutex::new(HashMap::new()),
                clock,
                config,
                remote,
                shutting_down: AtomicBool::new(false),
            }),
        }
    }

    pub fn wall_clock(config: ServerConfig) -> Self {
        Self::new(config, Arc::new(WallClock::new()))
    }

    pub fn session(&self, id: &str) -> Option<Arc<SessionHandle>> {
        self.inner.sessions.lock().expect("sessions lock").get(id).cloned()
    }

    fn handles(&self) -> Vec<Arc<SessionHandle>> {
        self.inner.sessions.lock().expect("sessions lock").values().cloned().collect()
    }

    fn backends(&self, kind: BackendKind) -> Result<Backends, SessionError> {
        match kind {
            BackendKind::Mock => Ok(Backends::mock()),
            BackendKind::Remote => {
                let backend = self
                    .inner
                    .remote
                    .clone()
                    .ok_or_else(|| SessionError::InvalidConfig("remote backend not configured".into()))?;
                Ok(Backends {
                    classifier: Arc::new(RemoteClassifier::new(backend.clone(), RuleClassifier::default())),
                    generator: Arc::new(LlmGenerator::new(backend)),
                    summarizer: Arc::new(ExtractiveSummarizer),
                    estimator: Arc::new(CharQuarterEstimator),
                })
            }
        }
    }

    /// Creates a session from a (possibly partial) config object layered
    /// over the server defaults.
    pub fn create(&self, overrides: &Value) -> Result<String, SessionError> {
        let mut merged = serde_json::to_value(&self.inner.config.defaults).expect("config serializes");
        match overrides {
            Value::Null => {}
            Value::Object(o) => {
                let base = merged.as_object_mut().expect("config is an object");
                for (k, v) in o {
                    base.insert(k.clone(), v.clone());
                }
            }
            _ => return Err(SessionError::InvalidConfig("config must be a JSON object".into())),
        }
        let config: SessionConfig =
            serde_json::from_value(merged).map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        let backends = self.backends(config.backend)?;
        let id = uuid::Uuid::new_v4().to_string();
        let session = create_session(id.clone(), config, backends, self.inner.clock.now_ms())?;
        self.inner.sessions.lock().expect("sessions lock").insert(id.clone(), Arc::new(SessionHandle::new(session)));
        Ok(id)
    }

    /// Accepts a user message and plans and delivers the reply on a
    /// blocking worker.
    pub fn post_message(&self, id: &str, text: String) -> Result<JoinHandle<()>, ApiError> {
        let h = self.session(id).ok_or(ApiError::NotFound)?;
        if self.inner.shutting_down.load(Ordering::Acquire) {
            return Err(ApiError::ShuttingDown);
        }
        if text.trim().is_empty() {
            return Err(ApiError::Session(SessionError::EmptyMessage));
        }
        if h.busy.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).is_err() {
            return Err(ApiError::Session(SessionError::Busy));
        }
        h.cancel.store(false, Ordering::Release);
        let inner = self.inner.clone();
        Ok(tokio::task::spawn_blocking(move || {
            let now = inner.clock.now_ms();
            let out = h.session.lock().expect("session lock").handle_user_message(&text, now);
            match out {
                Ok(out) => deliver(&inner, &h, out),
                Err(e) => {
                    warn!("message rejected late: {e}");
                    h.busy.store(false, Ordering::Release);
                }
            }
        }))
    }

    /// Runs one idle check for every quiet session. Returns the workers
    /// that are delivering check-ins.
    pub fn tick_idle_all(&self) -> Vec<JoinHandle<()>> {
        if self.inner.shutting_down.load(Ordering::Acquire) {
            return Vec::new();
        }
        let now = self.inner.clock.now_ms();
        let mut spawned = Vec::new();
        for h in self.handles() {
            if h.busy.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).is_err() {
                continue;
            }
            let due = {
                let s = h.session.lock().expect("session lock");
                !s.proactive_sent() && now >= s.idle_deadline_ms()
            };
            if !due {
                h.busy.store(false, Ordering::Release);
                continue;
            }
            h.cancel.store(false, Ordering::Release);
            let inner = self.inner.clone();
            spawned.push(tokio::task::spawn_blocking(move || {
                let out = h.session.lock().expect("session lock").tick_idle(now);
                match out {
                    Some(out) => deliver(&inner, &h, out),
                    None => h.busy.store(false, Ordering::Release),
                }
            }));
        }
        spawned
    }

    pub fn delete(&self, id: &str) -> bool {
        let removed = self.inner.sessions.lock().expect("sessions lock").remove(id);
        match removed {
            Some(h) => {
                h.cancel.store(true, Ordering::Release);
                h.close();
                true
            }
            None => false,
        }
    }

    /// Cancels in-flight turns (each ends with a cancelled marker), waits
    /// briefly for workers, then closes every stream.
    pub async fn shutdown(&self) {
        self.inner.shutting_down.store(true, Ordering::Release);
        let handles = self.handles();
        for h in &handles {
            h.cancel.store(true, Ordering::Release);
        }
        for _ in 0..250 {
            if handles.iter().all(|h| !h.busy.load(Ordering::Acquire)) {
                break;
            }
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
        for h in &handles {
            h.close();
        }
        info!("gateway stopped; {} session(s) closed", handles.len());
    }

    pub fn is_shutting_down(&self) -> bool {
        self.inner.shutting_down.load(Ordering::Acquire)
    }
}

fn deliver(inner: &Inner, h: &SessionHandle, out: TurnOutput) {
    h.append(&out.header());
    let clock = Interruptible { inner: inner.clock.as_ref(), cancel: &h.cancel };
    let mut sink = LogSink(h);
    match execute_plan(&out.plan, out.started_ms, &clock, &mut sink, &h.cancel) {
        Ok(Completion::Completed { .. }) => h.append(&out.terminator.clone().into()),
        Ok(Completion::Cancelled { .. }) | Err(SinkClosed) => {}
    }
    h.session.lock().expect("session lock").finish_emission(inner.clock.now_ms());
    h.busy.store(false, Ordering::Release);
}

#[derive(Debug)]
pub enum ApiError {
    NotFound,
    ShuttingDown,
    BadRequest(String),
    Session(SessionError),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = match self {
            ApiError::NotFound => (StatusCode::NOT_FOUND, "NOT_FOUND", "no such session or persona".to_string()),
            ApiError::ShuttingDown => (StatusCode::SERVICE_UNAVAILABLE, "SHUTTING_DOWN", "server is stopping".into()),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "BAD_REQUEST", m),
            ApiError::Session(e) => {
                let (status, code) = match e {
                    SessionError::Busy => (StatusCode::CONFLICT, "BUSY"),
                    SessionError::EmptyMessage => (StatusCode::BAD_REQUEST, "EMPTY_MESSAGE"),
                    SessionError::InvalidConfig(_) => (StatusCode::BAD_REQUEST, "INVALID_CONFIG"),
                };
                (status, code, e.to_string())
            }
        };
        (status, Json(json!({"type": "error", "code": code, "message": message}))).into_response()
    }
}

fn parse_body(body: &Bytes) -> Result<Value, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(Value::Null);
    }
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("invalid JSON: {e}")))
}

async fn create_handler(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    if app.is_shutting_down() {
        return Err(ApiError::ShuttingDown);
    }
    let id = app.create(&parse_body(&body)?).map_err(ApiError::Session)?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))).into_response())
}

async fn message_handler(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let text = match parse_body(&body)? {
        Value::Object(mut o) => match o.remove("text") {
            Some(Value::String(t)) => t,
            _ => return Err(ApiError::BadRequest("body must be {\"text\": string}".into())),
        },
        _ => return Err(ApiError::BadRequest("body must be {\"text\": string}".into())),
    };
    app.post_message(&id, text)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "accepted": true }))).into_response())
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: usize,
    #[serde(default = "yes")]
    follow: bool,
}

fn yes() -> bool {
    true
}

struct Cursor {
    handle: Arc<SessionHandle>,
    idx: usize,
    rx: watch::Receiver<LogState>,
    follow: bool,
}

async fn events_handler(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> Result<Response, ApiError> {
    let handle = app.session(&id).ok_or(ApiError::NotFound)?;
    let rx = handle.state.subscribe();
    let cursor = Cursor { handle, idx: q.since, rx, follow: q.follow };
    let stream = futures::stream::unfold(cursor, |mut c| async move {
        loop {
            c.rx.borrow_and_update();
            let (lines, closed) = c.handle.read_from(c.idx);
            if !lines.is_empty() {
                c.idx += lines.len();
                return Some((Ok::<_, Infallible>(Bytes::from(lines.concat())), c));
            }
            if closed || !c.follow || c.rx.changed().await.is_err() {
                return None;
            }
        }
    });
    Ok(([(header::CONTENT_TYPE, NDJSON)], Body::from_stream(stream)).into_response())
}

async fn transcript_handler(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let handle = app.session(&id).ok_or(ApiError::NotFound)?;
    let body = tokio::task::spawn_blocking(move || {
        let s = handle.session.lock().expect("session lock");
        let mut buf = Vec::new();
        write_transcript(&mut buf, s.transcript()).expect("in-memory write");
        buf
    })
    .await
    .map_err(|e| ApiError::BadRequest(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, NDJSON)], body).into_response())
}

async fn delete_handler(State(app): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    if app.delete(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::NotFound)
    }
}

async fn questions_handler(Path(persona): Path<String>) -> Result<Response, ApiError> {
    let p = Persona::from_str(&persona).map_err(|_| ApiError::NotFound)?;
    Ok(Json(json!({ "persona": p.as_str(), "questions": p.common_questions() })).into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_handler))
        .route("/sessions/{id}", axum::routing::delete(delete_handler))
        .route("/sessions/{id}/messages", post(message_handler))
        .route("/sessions/{id}/events", get(events_handler))
        .route("/sessions/{id}/transcript", get(transcript_handler))
        .route("/personas/{persona}/questions", get(questions_handler))
        .with_state(state)
}

/// Polls idle timers until shutdown begins.
pub fn spawn_idle_ticker(state: AppState, every: Duration) -> JoinHandle<()> {
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(every);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        while !state.is_shutting_down() {
            interval.tick().await;
            state.tick_idle_all();
        }
    })
}

pub async fn bind(addr: SocketAddr) -> Result<tokio::net::TcpListener, GatewayError> {
    tokio::net::TcpListener::bind(addr).await.map_err(|source| GatewayError::Bind { addr, source })
}

/// Serves until `signal` resolves, then cancels in-flight turns and closes
/// all streams.
pub async fn serve_with_shutdown(
    listener: tokio::net::TcpListener,
    state: AppState,
    signal: impl Future<Output = ()> + Send + 'static,
) -> Result<(), GatewayError> {
    let ticker = spawn_idle_ticker(state.clone(), state.inner.config.idle_poll);
    let app = router(state.clone());
    let stopping = state.clone();
    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            signal.await;
            stopping.shutdown().await;
        })
        .await?;
    ticker.abort();
    Ok(())
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: AppState) -> Result<(), GatewayError> {
    let listener = bind(addr).await?;
    info!("listening on {}", listener.local_addr()?);
    serve_with_shutdown(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
