//! HTTP session service: live searches whose queries are answered by a
//! remote operator.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::extract::{Path as UrlPath, Query as UrlQuery, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::watch;
use uuid::Uuid;

use querybridge_core::config::SearchConfig;
use querybridge_core::instance::PlanningInstance;
use querybridge_core::oracle::{Oracle, OracleAnswer, OracleError, Query, Verdict};
use querybridge_core::proposer::ScriptedDomain;
use querybridge_core::search::{SearchCounters, SearchOutcome};
use querybridge_core::trace::{TraceEvent, TraceSink};

use crate::io::split_instance;
use crate::runner::{plan, revealed};

pub const PROTOCOL_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub session_id: Uuid,
    pub seq: u64,
    pub kind: String,
    pub payload: Value,
}

impl SessionEvent {
    pub fn new(session_id: Uuid, seq: u64, event: &TraceEvent) -> Self {
        let mut v = serde_json::to_value(event).expect("trace events serialise");
        let payload = v.get_mut("payload").map(Value::take).unwrap_or(Value::Null);
        Self { session_id, seq, kind: event.kind_name().into(), payload }
    }

    /// The trace event this session event mirrors.
    pub fn trace_event(&self) -> Result<TraceEvent, serde_json::Error> {
        serde_json::from_value(json!({ "kind": self.kind, "payload": self.payload }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SessionState {
    Running,
    AwaitingAnswer { query: Query },
    Finished { status: String },
    Aborted { reason: String },
}

impl SessionState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, SessionState::Finished { .. } | SessionState::Aborted { .. })
    }
}

/// Body of `GET /sessions/{id}/outcome` once the session has ended, and
/// the persisted `<id>.outcome.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub session_id: Uuid,
    pub state: SessionState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<SearchOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counters: Option<SearchCounters>,
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub instance: Value,
    #[serde(default)]
    pub domain: Option<Value>,
    #[serde(default)]
    pub config: Option<SearchConfig>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnswerBody {
    #[serde(default)]
    pub session_id: Option<Uuid>,
    /// When set, the answer only applies to the query with this number.
    #[serde(default)]
    pub sequence_no: Option<u64>,
    pub verdict: Verdict,
    #[serde(default)]
    pub answer_text: String,
    #[serde(default)]
    pub substitutions: Vec<String>,
}

struct Inner {
    log: Vec<SessionEvent>,
    state: SessionState,
    answer_tx: Option<mpsc::SyncSender<OracleAnswer>>,
    answer_rx: Option<mpsc::Receiver<OracleAnswer>>,
    abort: bool,
    outcome: Option<SessionOutcome>,
}

pub struct Session {
    id: Uuid,
    inner: Mutex<Inner>,
    changed: watch::Sender<u64>,
}

impl Session {
    fn new(id: Uuid) -> Self {
        Self {
            id,
            inner: Mutex::new(Inner {
                log: Vec::new(),
                state: SessionState::Running,
                answer_tx: None,
                answer_rx: None,
                abort: false,
                outcome: None,
            }),
            changed: watch::channel(0).0,
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn notify(&self) {
        self.changed.send_modify(|n| *n += 1);
    }
}

/// Publishes engine events; a `QueryIssued` opens the answer slot under
/// the same lock, so a client that sees the query can always answer it.
struct SessionSink(Arc<Session>);

impl TraceSink for SessionSink {
    fn emit(&mut self, event: TraceEvent) {
        {
            let mut inner = self.0.lock();
            let seq = inner.log.len() as u64;
            if let TraceEvent::QueryIssued { query } = &event {
                let (tx, rx) = mpsc::sync_channel(1);
                inner.answer_tx = Some(tx);
                inner.answer_rx = Some(rx);
                inner.state = SessionState::AwaitingAnswer { query: query.clone() };
            }
            inner.log.push(SessionEvent::new(self.0.id, seq, &event));
        }
        self.0.notify();
    }
}

struct ChannelOracle {
    session: Arc<Session>,
    timeout: Option<Duration>,
}

impl Oracle for ChannelOracle {
    fn answer(&mut self, _q: &Query) -> Result<OracleAnswer, OracleError> {
        let rx = {
            let mut inner = self.session.lock();
            if inner.abort {
                return Err(OracleError::SessionClosed);
            }
            inner.answer_rx.take().ok_or_else(|| OracleError::OracleUnavailable("no pending query".into()))?
        };
        let got = match self.timeout {
            Some(t) => rx.recv_timeout(t).map_err(|e| match e {
                mpsc::RecvTimeoutError::Timeout => OracleError::QueryTimeout,
                mpsc::RecvTimeoutError::Disconnected => OracleError::SessionClosed,
            }),
            None => rx.recv().map_err(|_| OracleError::SessionClosed),
        };
        let mut inner = self.session.lock();
        inner.answer_tx = None;
        if got.is_ok() {
            inner.state = SessionState::Running;
        }
        got
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Used when a create request carries no config.
    pub search: SearchConfig,
    /// Event logs and outcomes are written to `<out_dir>/sessions/`.
    pub out_dir: Option<PathBuf>,
    pub query_timeout: Option<Duration>,
}

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<Mutex<BTreeMap<Uuid, Arc<Session>>>>,
    cfg: Arc<ServiceConfig>,
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Self {
        Self { sessions: Arc::new(Mutex::new(BTreeMap::new())), cfg: Arc::new(cfg) }
    }

    fn get(&self, id: &str) -> Option<Arc<Session>> {
        let id = Uuid::parse_str(id).ok()?;
        self.sessions.lock().unwrap_or_else(|e| e.into_inner()).get(&id).cloned()
    }

    fn insert(&self, s: Arc<Session>) {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner()).insert(s.id, s);
    }

    /// Restores finished sessions persisted under `out_dir`, so their logs
    /// can be replayed. Returns how many were loaded.
    pub fn load_persisted(&self) -> std::io::Result<usize> {
        let Some(dir) = self.cfg.out_dir.as_ref().map(|d| d.join("sessions")) else {
            return Ok(0);
        };
        if !dir.is_dir() {
            return Ok(0);
        }
        let mut n = 0;
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
            let Some(id) = name.strip_suffix(".outcome.json").and_then(|s| Uuid::parse_str(s).ok()) else {
                continue;
            };
            let Ok(outcome) = serde_json::from_str::<SessionOutcome>(&std::fs::read_to_string(&path)?) else {
                continue;
            };
            let log: Vec<SessionEvent> = std::fs::read_to_string(dir.join(format!("{id}.jsonl")))?
                .lines()
                .filter_map(|l| serde_json::from_str(l).ok())
                .collect();
            let s = Session::new(id);
            {
                let mut inner = s.lock();
                inner.log = log;
                inner.state = outcome.state.clone();
                inner.outcome = Some(outcome);
            }
            self.insert(Arc::new(s));
            n += 1;
        }
        Ok(n)
    }
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(json!({ "error": msg.into() }))).into_response()
}

fn persist(dir: &Path, outcome: &SessionOutcome, log: &[SessionEvent]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut text = String::new();
    for e in log {
        text.push_str(&serde_json::to_string(e).map_err(std::io::Error::other)?);
        text.push('\n');
    }
    std::fs::write(dir.join(format!("{}.jsonl", outcome.session_id)), text)?;
    crate::io::write_json(&dir.join(format!("{}.outcome.json", outcome.session_id)), outcome)
}

fn spawn_engine(
    session: Arc<Session>,
    inst: PlanningInstance,
    mut domain: ScriptedDomain,
    cfg: SearchConfig,
    svc: Arc<ServiceConfig>,
) {
    std::thread::spawn(move || {
        let mut oracle = ChannelOracle { session: session.clone(), timeout: svc.query_timeout };
        let mut sink = SessionSink(session.clone());
        let result = plan(&inst, &cfg, &mut oracle, &mut domain, &mut sink);
        let outcome = match result {
            Ok(r) => SessionOutcome {
                session_id: session.id,
                state: SessionState::Finished { status: r.outcome.status().into() },
                outcome: Some(r.outcome),
                counters: Some(r.counters),
            },
            Err(e) => SessionOutcome {
                session_id: session.id,
                state: SessionState::Aborted { reason: e.to_string() },
                outcome: None,
                counters: None,
            },
        };
        let log = session.lock().log.clone();
        if let Some(dir) = &svc.out_dir {
            if let Err(e) = persist(&dir.join("sessions"), &outcome, &log) {
                eprintln!("session {}: could not persist log: {e}", session.id);
            }
        }
        {
            let mut inner = session.lock();
            inner.state = outcome.state.clone();
            inner.answer_tx = None;
            inner.answer_rx = None;
            inner.outcome = Some(outcome);
        }
        session.notify();
    });
}

async fn create(State(app): State<AppState>, Json(body): Json<CreateSession>) -> Response {
    let origin = Path::new("request");
    let (inst, inline) = match split_instance(origin, body.instance, None) {
        Ok(x) => x,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let domain = match (inline, body.domain) {
        (Some(d), _) => d,
        (None, Some(v)) => match serde_json::from_value::<ScriptedDomain>(v) {
            Ok(d) => match d.validate() {
                Ok(()) => d,
                Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
            },
            Err(e) => return error(StatusCode::BAD_REQUEST, format!("domain: {e}")),
        },
        (None, None) => return error(StatusCode::BAD_REQUEST, "a domain rule list is required"),
    };
    let cfg = body.config.unwrap_or_else(|| app.cfg.search.clone());
    if let Err(e) = cfg.validate() {
        return error(StatusCode::BAD_REQUEST, format!("config: {e}"));
    }
    let inst = match body.k {
        Some(k) => match revealed(&inst, k, body.seed.unwrap_or(0)) {
            Ok((i, _)) => i,
            Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
        },
        None => inst,
    };
    let session = Arc::new(Session::new(Uuid::new_v4()));
    app.insert(session.clone());
    spawn_engine(session.clone(), inst, domain, cfg, app.cfg.clone());
    (StatusCode::CREATED, Json(json!({ "session_id": session.id, "protocol": PROTOCOL_VERSION }))).into_response()
}

async fn list(State(app): State<AppState>) -> Response {
    let sessions: Vec<Value> = app
        .sessions
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .values()
        .map(|s| json!({ "session_id": s.id, "state": s.lock().state }))
        .collect();
    Json(json!({ "sessions": sessions })).into_response()
}

async fn status(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(s) = app.get(&id) else { return error(StatusCode::NOT_FOUND, "unknown session") };
    let inner = s.lock();
    Json(json!({ "session_id": s.id, "state": inner.state, "events": inner.log.len() })).into_response()
}

async fn outcome(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(s) = app.get(&id) else { return error(StatusCode::NOT_FOUND, "unknown session") };
    let inner = s.lock();
    match &inner.outcome {
        Some(o) => Json(o).into_response(),
        None => (StatusCode::ACCEPTED, Json(json!({ "session_id": s.id, "state": inner.state }))).into_response(),
    }
}

async fn answer(State(app): State<AppState>, UrlPath(id): UrlPath<String>, Json(body): Json<AnswerBody>) -> Response {
    let Some(s) = app.get(&id) else { return error(StatusCode::NOT_FOUND, "unknown session") };
    if body.session_id.is_some_and(|b| b != s.id) {
        return error(StatusCode::BAD_REQUEST, "session_id does not match the url");
    }
    let mut inner = s.lock();
    if inner.state.is_terminal() {
        return error(StatusCode::GONE, "session finished");
    }
    let SessionState::AwaitingAnswer { query } = inner.state.clone() else {
        return error(StatusCode::CONFLICT, "no pending query");
    };
    if body.sequence_no.is_some_and(|n| n != query.sequence_no) {
        return error(StatusCode::CONFLICT, format!("query {} is not pending", body.sequence_no.unwrap_or_default()));
    }
    let Some(tx) = inner.answer_tx.take() else {
        return error(StatusCode::CONFLICT, "no pending query");
    };
    let a = OracleAnswer::new(body.verdict, &body.answer_text, body.substitutions);
    if tx.send(a).is_err() {
        return error(StatusCode::GONE, "session finished");
    }
    inner.state = SessionState::Running;
    drop(inner);
    s.notify();
    (StatusCode::ACCEPTED, Json(json!({ "session_id": s.id, "sequence_no": query.sequence_no }))).into_response()
}

async fn abort(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(s) = app.get(&id) else { return error(StatusCode::NOT_FOUND, "unknown session") };
    let mut inner = s.lock();
    if inner.state.is_terminal() {
        return error(StatusCode::GONE, "session finished");
    }
    inner.abort = true;
    inner.answer_tx = None;
    (StatusCode::ACCEPTED, Json(json!({ "session_id": s.id }))).into_response()
}

#[derive(Debug, Deserialize)]
struct StreamParams {
    #[serde(default)]
    from: Option<u64>,
}

/// Next event at or after `cursor`; `None` once the session has ended and
/// the log is drained.
async fn next_event(s: &Session, rx: &mut watch::Receiver<u64>, cursor: u64) -> Option<SessionEvent> {
    loop {
        rx.borrow_and_update();
        {
            let inner = s.lock();
            if let Some(e) = inner.log.get(cursor as usize) {
                return Some(e.clone());
            }
            if inner.state.is_terminal() {
                return None;
            }
        }
        if rx.changed().await.is_err() {
            return None;
        }
    }
}

fn event_stream(s: Arc<Session>, from: u64) -> impl Stream<Item = Result<Event, Infallible>> {
    let rx = s.changed.subscribe();
    futures::stream::unfold((s, rx, from), |(s, mut rx, cursor)| async move {
        let e = next_event(&s, &mut rx, cursor).await?;
        let sse = Event::default()
            .id(e.seq.to_string())
            .event(e.kind.clone())
            .data(serde_json::to_string(&e).expect("session events serialise"));
        Some((Ok(sse), (s, rx, cursor + 1)))
    })
}

async fn events(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    UrlQuery(params): UrlQuery<StreamParams>,
    headers: HeaderMap,
) -> Response {
    let Some(s) = app.get(&id) else { return error(StatusCode::NOT_FOUND, "unknown session") };
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok())
        .map(|n| n + 1);
    let from = params.from.or(resume).unwrap_or(0);
    Sse::new(event_stream(s, from)).keep_alive(KeepAlive::default()).into_response()
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(status).delete(abort))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/answer", post(answer))
        .route("/sessions/{id}/outcome", get(outcome))
        .with_state(app)
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, cfg: ServiceConfig) -> std::io::Result<()> {
    let app = AppState::new(cfg);
    let restored = app.load_persisted()?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {} ({restored} stored sessions)", listener.local_addr()?);
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
