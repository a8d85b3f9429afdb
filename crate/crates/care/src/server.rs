//! Real-time chat server.
//!
//! Each session is owned by one actor task that serializes every transcript
//! mutation. Connections talk to the actor over a channel; the actor writes
//! frames into per-connection outboxes, whose writer tasks stamp `seq`.
//! Suggestions are computed on the blocking pool and come back to the actor
//! as a separate command, so fan-out never waits for the pipeline.

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use care_core::classify::ClassifyError;
use care_core::pipeline::Pipeline;
use care_core::telemetry::{
    ClickPayload, EventRecord, EventType, PanelPayload, PresencePayload, ShownSuggestionSet, TypingPayload,
};
use care_core::{Category, Conversation, Speaker, SuggestionSet};
use futures_util::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;

use crate::eventlog::EventLog;
use crate::protocol::{
    ClickRequest, CreateSessionRequest, CreateSessionResponse, ErrorCode, ErrorPayload, Frame, FrameType,
    JoinRequest, JoinedPayload, MessageRequest, PresenceUpdate, SuggestionsPayload, TypingRequest,
};

/// Computes the suggestion set for a transcript snapshot. Runs on the
/// blocking pool.
pub trait SuggestionSource: Send + Sync + 'static {
    fn suggest(&self, conversation: &Conversation) -> Result<SuggestionSet, ClassifyError>;
}

impl SuggestionSource for Pipeline {
    fn suggest(&self, conversation: &Conversation) -> Result<SuggestionSet, ClassifyError> {
        Pipeline::suggest(self, conversation)
    }
}

/// Sleeps before delegating; for exercising slow-pipeline behavior.
#[derive(Debug, Clone)]
pub struct Delayed<S> {
    pub inner: S,
    pub delay: Duration,
}

impl<S: SuggestionSource> SuggestionSource for Delayed<S> {
    fn suggest(&self, conversation: &Conversation) -> Result<SuggestionSet, ClassifyError> {
        std::thread::sleep(self.delay);
        self.inner.suggest(conversation)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServerOptions {
    /// Session logs go to `<log_dir>/<session_id>.jsonl` when set.
    pub log_dir: Option<PathBuf>,
    /// Served under `/` when set.
    pub static_dir: Option<PathBuf>,
}

type Outbox = mpsc::UnboundedSender<(FrameType, Value)>;
type ConnId = u64;

/// Point-in-time view of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub category: Category,
    pub transcript: Conversation,
    pub panel_visible: bool,
    pub participants: BTreeMap<Speaker, String>,
    pub live: Option<ShownSuggestionSet>,
    pub created_ms: i64,
}

enum Command {
    Join {
        role: Speaker,
        name: String,
        outbox: Outbox,
        reply: oneshot::Sender<Result<ConnId, ErrorCode>>,
    },
    Leave {
        role: Speaker,
        conn: ConnId,
    },
    Message {
        role: Speaker,
        conn: ConnId,
        text: String,
    },
    Typing {
        role: Speaker,
        conn: ConnId,
        typing: bool,
    },
    Panel {
        conn: ConnId,
        visible: bool,
    },
    Click {
        conn: ConnId,
        suggestion_id: String,
    },
    Ready(SuggestionSet),
    Snapshot(oneshot::Sender<SessionSnapshot>),
}

type SessionTx = mpsc::UnboundedSender<Command>;

struct Inner {
    sessions: Mutex<HashMap<String, SessionTx>>,
    source: Arc<dyn SuggestionSource>,
    opts: ServerOptions,
}

/// Shared server state: the session table and the suggestion source.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for AppState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AppState").field("opts", &self.inner.opts).finish_non_exhaustive()
    }
}

pub(crate) fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as i64)
}

impl AppState {
    pub fn new(source: Arc<dyn SuggestionSource>, opts: ServerOptions) -> Self {
        AppState {
            inner: Arc::new(Inner {
                sessions: Mutex::new(HashMap::new()),
                source,
                opts,
            }),
        }
    }

    /// Creates a session and starts its actor. Must run inside a Tokio
    /// runtime.
    pub fn create_session(&self, category: Category) -> String {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let (tx, rx) = mpsc::unbounded_channel();
        let log = self.inner.opts.log_dir.as_ref().and_then(|dir| match EventLog::open(dir, &id) {
            Ok(l) => Some(l),
            Err(e) => {
                log::warn!("session {id}: cannot open event log in {}: {e}", dir.display());
                None
            }
        });
        let session = Session {
            id: id.clone(),
            transcript: Conversation::new(id.clone(), category),
            participants: BTreeMap::new(),
            panel_visible: true,
            live: None,
            log,
            last_ts: 0,
            created_ms: now_ms(),
            next_conn: 1,
            source: Arc::clone(&self.inner.source),
            commands: tx.downgrade(),
        };
        tokio::spawn(session.run(rx));
        self.inner.sessions.lock().expect("session table").insert(id.clone(), tx);
        id
    }

    fn session(&self, id: &str) -> Option<SessionTx> {
        self.inner.sessions.lock().expect("session table").get(id).cloned()
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.inner.sessions.lock().expect("session table").keys().cloned().collect();
        ids.sort();
        ids
    }

    pub async fn snapshot(&self, id: &str) -> Option<SessionSnapshot> {
        let tx = self.session(id)?;
        let (reply, rx) = oneshot::channel();
        tx.send(Command::Snapshot(reply)).ok()?;
        rx.await.ok()
    }
}

struct Participant {
    conn: ConnId,
    name: String,
    outbox: Outbox,
}

struct Session {
    id: String,
    transcript: Conversation,
    participants: BTreeMap<Speaker, Participant>,
    panel_visible: bool,
    /// The set currently displayed to the counselor.
    live: Option<ShownSuggestionSet>,
    log: Option<EventLog>,
    last_ts: i64,
    created_ms: i64,
    next_conn: ConnId,
    source: Arc<dyn SuggestionSource>,
    commands: mpsc::WeakUnboundedSender<Command>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("payloads serialize")
}

fn send_error(outbox: &Outbox, code: ErrorCode, message: impl Into<String>) {
    let _ = outbox.send((
        FrameType::Error,
        to_value(&ErrorPayload {
            code,
            message: message.into(),
        }),
    ));
}

impl Session {
    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<Command>) {
        while let Some(cmd) = rx.recv().await {
            self.handle(cmd);
        }
    }

    fn record<T: Serialize>(&mut self, event_type: EventType, payload: &T) {
        let ts = now_ms().max(self.last_ts);
        self.last_ts = ts;
        if let Some(log) = &mut self.log {
            if let Err(e) = log.append(&EventRecord::new(ts, self.id.as_str(), event_type, payload)) {
                log::warn!("session {}: event log write failed: {e}", self.id);
            }
        }
    }

    fn send_to(&self, role: Speaker, kind: FrameType, payload: Value) {
        if let Some(p) = self.participants.get(&role) {
            let _ = p.outbox.send((kind, payload));
        }
    }

    fn broadcast(&self, kind: FrameType, payload: Value) {
        for p in self.participants.values() {
            let _ = p.outbox.send((kind, payload.clone()));
        }
    }

    /// The participant's outbox if `conn` still owns `role`.
    fn owner(&self, role: Speaker, conn: ConnId) -> Option<&Outbox> {
        self.participants.get(&role).filter(|p| p.conn == conn).map(|p| &p.outbox)
    }

    fn counselor_outbox(&self, conn: ConnId) -> Option<&Outbox> {
        self.owner(Speaker::Counselor, conn)
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Join {
                role,
                name,
                outbox,
                reply,
            } => self.join(role, name, outbox, reply),
            Command::Leave { role, conn } => self.leave(role, conn),
            Command::Message { role, conn, text } => self.message(role, conn, text),
            Command::Typing { role, conn, typing } => {
                if self.owner(role, conn).is_none() {
                    return;
                }
                let payload = TypingPayload { role, typing };
                self.send_to(role.other(), FrameType::Typing, to_value(&payload));
                self.record(EventType::Typing, &payload);
            }
            Command::Panel { conn, visible } => {
                if self.counselor_outbox(conn).is_none() {
                    return;
                }
                self.panel_visible = visible;
                self.record(EventType::PanelToggle, &PanelPayload { visible });
            }
            Command::Click { conn, suggestion_id } => {
                let Some(outbox) = self.counselor_outbox(conn).cloned() else {
                    return;
                };
                match self.live.as_ref().and_then(|l| l.get(&suggestion_id)) {
                    Some(s) => {
                        let payload = ClickPayload {
                            suggestion_id: s.id.clone(),
                            strategy: s.strategy,
                            text: s.text.clone(),
                        };
                        self.record(EventType::SuggestionClick, &payload);
                    }
                    None => send_error(
                        &outbox,
                        ErrorCode::UnknownSuggestion,
                        format!("no live suggestion `{suggestion_id}`"),
                    ),
                }
            }
            Command::Ready(set) => self.suggestions_ready(set),
            Command::Snapshot(reply) => {
                let _ = reply.send(SessionSnapshot {
                    session_id: self.id.clone(),
                    category: self.transcript.category.clone(),
                    transcript: self.transcript.clone(),
                    panel_visible: self.panel_visible,
                    participants: self.participants.iter().map(|(r, p)| (*r, p.name.clone())).collect(),
                    live: self.live.clone(),
                    created_ms: self.created_ms,
                });
            }
        }
    }

    fn join(
        &mut self,
        role: Speaker,
        name: String,
        outbox: Outbox,
        reply: oneshot::Sender<Result<ConnId, ErrorCode>>,
    ) {
        if self.participants.contains_key(&role) {
            let _ = reply.send(Err(ErrorCode::RoleTaken));
            return;
        }
        let conn = self.next_conn;
        self.next_conn += 1;
        if reply.send(Ok(conn)).is_err() {
            return;
        }
        let joined = JoinedPayload {
            session_id: self.id.clone(),
            role,
            name: name.clone(),
            category: self.transcript.category.clone(),
            transcript: self.transcript.utterances.clone(),
            panel_visible: self.panel_visible,
        };
        let _ = outbox.send((FrameType::Joined, to_value(&joined)));
        if let Some(other) = self.participants.get(&role.other()) {
            let presence = PresenceUpdate {
                role: role.other(),
                name: other.name.clone(),
                online: true,
            };
            let _ = outbox.send((FrameType::Presence, to_value(&presence)));
        }
        if role == Speaker::Counselor {
            if let Some(live) = self.live.as_ref().filter(|l| !l.items.is_empty()) {
                let _ = outbox.send((FrameType::Suggestions, to_value(&SuggestionsPayload::from(live))));
            }
        }
        self.participants.insert(role, Participant { conn, name: name.clone(), outbox });
        self.broadcast(
            FrameType::Presence,
            to_value(&PresenceUpdate {
                role,
                name: name.clone(),
                online: true,
            }),
        );
        self.record(EventType::Join, &PresencePayload { role, name: Some(name) });
    }

    fn leave(&mut self, role: Speaker, conn: ConnId) {
        if self.owner(role, conn).is_none() {
            return;
        }
        let p = self.participants.remove(&role).expect("owner checked");
        self.broadcast(
            FrameType::Presence,
            to_value(&PresenceUpdate {
                role,
                name: p.name.clone(),
                online: false,
            }),
        );
        self.record(
            EventType::Leave,
            &PresencePayload {
                role,
                name: Some(p.name),
            },
        );
    }

    fn message(&mut self, role: Speaker, conn: ConnId, text: String) {
        let Some(outbox) = self.owner(role, conn).cloned() else {
            return;
        };
        if text.trim().is_empty() {
            send_error(&outbox, ErrorCode::EmptyMessage, "message text is empty");
            return;
        }
        let index = self.transcript.push(role, text.clone());
        // Any displayed set now refers to an older utterance.
        self.live = None;
        let payload = care_core::telemetry::MessagePayload { index, role, text };
        self.broadcast(FrameType::Message, to_value(&payload));
        self.record(EventType::Message, &payload);

        let snapshot = self.transcript.clone();
        let source = Arc::clone(&self.source);
        let commands = self.commands.clone();
        let id = self.id.clone();
        tokio::spawn(async move {
            match tokio::task::spawn_blocking(move || source.suggest(&snapshot)).await {
                Ok(Ok(set)) => {
                    if let Some(tx) = commands.upgrade() {
                        let _ = tx.send(Command::Ready(set));
                    }
                }
                Ok(Err(e)) => log::warn!("session {id}: suggestion pipeline failed: {e}"),
                Err(e) => log::warn!("session {id}: suggestion task panicked: {e}"),
            }
        });
    }

    fn suggestions_ready(&mut self, set: SuggestionSet) {
        if self.transcript.last_index() != Some(set.for_utterance_index) {
            log::debug!(
                "session {}: dropping stale suggestions for utterance {}",
                self.id,
                set.for_utterance_index
            );
            return;
        }
        let shown = ShownSuggestionSet::from_set(&set);
        self.send_to(
            Speaker::Counselor,
            FrameType::Suggestions,
            to_value(&SuggestionsPayload::from(&shown)),
        );
        self.record(EventType::SuggestionsShown, &shown);
        self.live = Some(shown);
    }
}

async fn healthz() -> &'static str {
    "ok"
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Response {
    let req = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSessionRequest { category: None }
    } else {
        match serde_json::from_slice::<CreateSessionRequest>(&body) {
            Ok(r) => r,
            Err(e) => {
                return (
                    StatusCode::BAD_REQUEST,
                    Json(serde_json::json!({ "error": e.to_string() })),
                )
                    .into_response()
            }
        }
    };
    let category = req.category.unwrap_or(Category::Other("general".into()));
    let session_id = state.create_session(category.clone());
    Json(CreateSessionResponse { session_id, category }).into_response()
}

#[derive(Debug, Deserialize)]
struct WsQuery {
    session: String,
    #[serde(default)]
    role: Option<String>,
    #[serde(default)]
    name: Option<String>,
}

async fn ws_handler(ws: WebSocketUpgrade, Query(q): Query<WsQuery>, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, state, q))
}

fn parse_role(s: &str) -> Option<Speaker> {
    match s {
        "seeker" => Some(Speaker::Seeker),
        "counselor" => Some(Speaker::Counselor),
        _ => None,
    }
}

async fn try_join(session: &SessionTx, role: Speaker, name: Option<String>, outbox: &Outbox) -> Option<ConnId> {
    let name = name.filter(|n| !n.trim().is_empty()).unwrap_or_else(|| role.as_str().to_string());
    let (reply, rx) = oneshot::channel();
    session
        .send(Command::Join {
            role,
            name,
            outbox: outbox.clone(),
            reply,
        })
        .ok()?;
    match rx.await.ok()? {
        Ok(conn) => Some(conn),
        Err(code) => {
            send_error(outbox, code, format!("the {role} slot is taken"));
            None
        }
    }
}

async fn connection(socket: WebSocket, state: AppState, q: WsQuery) {
    let (mut sink, mut stream) = socket.split();
    let (outbox, mut out_rx) = mpsc::unbounded_channel::<(FrameType, Value)>();
    let writer = tokio::spawn(async move {
        let mut seq = 0u64;
        while let Some((kind, payload)) = out_rx.recv().await {
            seq += 1;
            let frame = Frame { kind, seq, payload };
            if sink.send(WsMessage::Text(frame.to_text().into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    let Some(session) = state.session(&q.session) else {
        send_error(&outbox, ErrorCode::UnknownSession, format!("no session `{}`", q.session));
        drop(outbox);
        let _ = writer.await;
        return;
    };

    let mut joined: Option<(Speaker, ConnId)> = None;
    if let Some(role) = q.role.as_deref() {
        match parse_role(role) {
            Some(role) => joined = try_join(&session, role, q.name.clone(), &outbox).await.map(|c| (role, c)),
            None => send_error(&outbox, ErrorCode::BadFrame, format!("unknown role `{role}`")),
        }
    }

    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            WsMessage::Text(t) => t,
            WsMessage::Close(_) => break,
            _ => continue,
        };
        let frame: Frame = match serde_json::from_str(text.as_str()) {
            Ok(f) => f,
            Err(e) => {
                send_error(&outbox, ErrorCode::BadFrame, e.to_string());
                continue;
            }
        };
        let bad = |e: serde_json::Error| send_error(&outbox, ErrorCode::BadFrame, e.to_string());
        let Some((role, conn)) = joined else {
            if frame.kind == FrameType::Join {
                match frame.payload_as::<JoinRequest>() {
                    Ok(req) => joined = try_join(&session, req.role, req.name, &outbox).await.map(|c| (req.role, c)),
                    Err(e) => bad(e),
                }
            } else {
                send_error(&outbox, ErrorCode::NotJoined, "join the session first");
            }
            continue;
        };
        let cmd = match frame.kind {
            FrameType::Message => match frame.payload_as::<MessageRequest>() {
                Ok(m) => Command::Message { role, conn, text: m.text },
                Err(e) => {
                    bad(e);
                    continue;
                }
            },
            FrameType::Typing => match frame.payload_as::<TypingRequest>() {
                Ok(t) => Command::Typing {
                    role,
                    conn,
                    typing: t.typing,
                },
                Err(e) => {
                    bad(e);
                    continue;
                }
            },
            FrameType::PanelToggle | FrameType::SuggestionClick if role != Speaker::Counselor => {
                send_error(&outbox, ErrorCode::Forbidden, "only the counselor has a suggestion panel");
                continue;
            }
            FrameType::PanelToggle => match frame.payload_as::<PanelPayload>() {
                Ok(p) => Command::Panel {
                    conn,
                    visible: p.visible,
                },
                Err(e) => {
                    bad(e);
                    continue;
                }
            },
            FrameType::SuggestionClick => match frame.payload_as::<ClickRequest>() {
                Ok(c) => Command::Click {
                    conn,
                    suggestion_id: c.suggestion_id,
                },
                Err(e) => {
                    bad(e);
                    continue;
                }
            },
            FrameType::Join => {
                send_error(&outbox, ErrorCode::BadFrame, "already joined");
                continue;
            }
            other => {
                send_error(&outbox, ErrorCode::BadFrame, format!("{other:?} frames are server-only"));
                continue;
            }
        };
        if session.send(cmd).is_err() {
            break;
        }
    }

    if let Some((role, conn)) = joined {
        let _ = session.send(Command::Leave { role, conn });
    }
    drop(outbox);
    // The actor drops its outbox clone on leave; don't hang if it is gone.
    let _ = tokio::time::timeout(Duration::from_secs(2), writer).await;
}

pub fn router(state: AppState) -> Router {
    let static_dir = state.inner.opts.static_dir.clone();
    let app = Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/ws", get(ws_handler))
        .with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => app,
    }
}

/// A server bound to a socket and running on the current runtime.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    state: AppState,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<io::Result<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn state(&self) -> &AppState {
        &self.state
    }

    pub fn http_base(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn ws_base(&self) -> String {
        format!("ws://{}", self.addr)
    }

    /// Resolves when the server stops on its own (normally never).
    pub async fn wait(self) -> io::Result<()> {
        self.task.await.map_err(io::Error::other)?
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        // Open sockets can hold graceful shutdown; give them a moment.
        if tokio::time::timeout(Duration::from_secs(2), &mut self.task).await.is_err() {
            self.task.abort();
        }
    }
}

pub async fn bind(addr: SocketAddr, state: AppState) -> io::Result<ServerHandle> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(state.clone());
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = rx.await;
            })
            .await
    });
    Ok(ServerHandle {
        addr,
        state,
        shutdown: Some(tx),
        task,
    })
}
