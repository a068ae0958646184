use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use hilo_core::domain::{TaskKind, UserEvent, UserEventKind};
use hilo_core::highlevel::PolicyKind;
use hilo_core::orchestrator::{EventLog, Session, SessionConfig};
use tracing::{info, warn};

use crate::protocol::{ClientMsg, Framer, ServerMsg};

#[derive(Clone, Debug)]
pub struct ServerConfig {
    /// Where finished sessions write their logs; `None` keeps them in memory.
    pub log_dir: Option<PathBuf>,
    /// Virtual seconds per wall-clock second.
    pub speed: f64,
    pub tick: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { log_dir: Some(PathBuf::from("logs")), speed: 1.0, tick: Duration::from_millis(20) }
    }
}

/// A session driven by wall-clock time and client messages.
pub struct Live {
    session: Session,
    framer: Framer,
    framed: usize,
    paused: bool,
}

impl Live {
    pub fn start(task: TaskKind, policy: PolicyKind, seed: u64) -> Result<(Live, Vec<String>), String> {
        let mut cfg = SessionConfig::new(task, policy, seed);
        cfg.realtime = true;
        let session = Session::from_config(cfg).map_err(|e| e.to_string())?;
        let mut live = Live { session, framer: Framer::default(), framed: 0, paused: false };
        let frames = live.drain();
        Ok((live, frames))
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn is_ended(&self) -> bool {
        self.session.is_ended()
    }

    pub fn log(&self) -> &EventLog {
        self.session.log()
    }

    fn drain(&mut self) -> Vec<String> {
        let records = &self.session.log().records[self.framed..];
        self.framed += records.len();
        records.iter().flat_map(|r| self.framer.frames(r)).map(|m| m.to_text()).collect()
    }

    /// Moves the virtual clock forward unless paused.
    pub fn advance(&mut self, dt_us: u64) -> Vec<String> {
        if !self.paused && !self.session.is_ended() {
            let t = self.session.now_us() + dt_us;
            self.session.run_until(t);
        }
        self.drain()
    }

    fn user(&mut self, kind: UserEventKind) {
        let time = self.session.now_us() as f64 / 1e6;
        self.session.schedule_user_event(UserEvent { kind, time });
    }

    pub fn handle(&mut self, msg: ClientMsg) -> Vec<String> {
        if self.session.is_ended() {
            return vec![ServerMsg::error("session_ended", "start a new session").to_text()];
        }
        match msg {
            ClientMsg::StartSession { .. } => {
                return vec![ServerMsg::error("session_active", "stop the current session first").to_text()]
            }
            ClientMsg::Prompt { text } => self.user(UserEventKind::Prompt { text }),
            ClientMsg::Interjection { text } => self.user(UserEventKind::Interjection { text }),
            ClientMsg::Resume => self.user(UserEventKind::Resume),
            ClientMsg::EvalMark { decision_id, correct } => self.session.record_mark(decision_id, correct),
            ClientMsg::Pause => self.paused = !self.paused,
            ClientMsg::Stop => self.session.stop(),
        }
        self.drain()
    }
}

/// Per-connection state: at most one live session at a time.
pub struct Connection {
    pub config: ServerConfig,
    pub live: Option<Live>,
    pub finished: Vec<EventLog>,
}

impl Connection {
    pub fn new(config: ServerConfig) -> Self {
        Connection { config, live: None, finished: Vec::new() }
    }

    pub fn on_text(&mut self, text: &str) -> Vec<String> {
        let msg: ClientMsg = match serde_json::from_str(text) {
            Ok(m) => m,
            Err(e) => return vec![ServerMsg::error("bad_message", e.to_string()).to_text()],
        };
        let out = match (&mut self.live, msg) {
            (None, ClientMsg::StartSession { task, policy, seed }) => match Live::start(task, policy, seed) {
                Ok((live, frames)) => {
                    self.live = Some(live);
                    frames
                }
                Err(e) => vec![ServerMsg::error("bad_session", e).to_text()],
            },
            (None, _) => vec![ServerMsg::error("no_session", "send start_session first").to_text()],
            (Some(live), msg) => live.handle(msg),
        };
        self.reap();
        out
    }

    pub fn on_tick(&mut self, dt_us: u64) -> Vec<String> {
        let out = self.live.as_mut().map(|l| l.advance(dt_us)).unwrap_or_default();
        self.reap();
        out
    }

    fn reap(&mut self) {
        if !self.live.as_ref().is_some_and(Live::is_ended) {
            return;
        }
        let live = self.live.take().expect("checked");
        let cfg = live.session.config.clone();
        let log = live.session.into_log();
        if let Some(dir) = &self.config.log_dir {
            let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
            let name = format!("{}-{}-{}-{stamp}.jsonl", cfg.task.as_str(), cfg.policy.as_str(), cfg.seed);
            let path = dir.join(name);
            let written = std::fs::create_dir_all(dir).map_err(|e| e.to_string()).and_then(|_| log.write(&path).map_err(|e| e.to_string()));
            match written {
                Ok(()) => info!(path = %path.display(), "session log written"),
                Err(e) => warn!("could not write session log: {e}"),
            }
        }
        self.finished.push(log);
    }
}

async fn ws_handler(ws: WebSocketUpgrade, State(cfg): State<Arc<ServerConfig>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| run_socket(socket, (*cfg).clone()))
}

async fn run_socket(socket: WebSocket, config: ServerConfig) {
    let (mut tx, mut rx) = socket.split();
    let speed = config.speed;
    let mut interval = tokio::time::interval(config.tick);
    let mut conn = Connection::new(config);
    let mut last = Instant::now();
    loop {
        let frames = tokio::select! {
            msg = rx.next() => match msg {
                Some(Ok(Message::Text(t))) => tokio::task::block_in_place(|| conn.on_text(&t)),
                Some(Ok(Message::Binary(_))) => vec![ServerMsg::error("bad_message", "expected a text frame").to_text()],
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => Vec::new(),
            },
            _ = interval.tick() => {
                let now = Instant::now();
                let dt = ((now - last).as_secs_f64() * speed * 1e6).round() as u64;
                last = now;
                tokio::task::block_in_place(|| conn.on_tick(dt))
            }
        };
        for f in frames {
            if tx.send(Message::Text(f)).await.is_err() {
                return;
            }
        }
    }
    if let Some(live) = conn.live.as_mut() {
        live.session.stop();
    }
    conn.reap();
}

pub fn router(config: ServerConfig) -> Router {
    Router::new()
        .route("/ws", get(ws_handler))
        .route("/", get(ws_handler))
        .route("/health", get(|| async { "ok" }))
        .with_state(Arc::new(config))
}

pub async fn serve(addr: SocketAddr, config: ServerConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!(%addr, "listening");
    axum::serve(listener, router(config)).await
}
