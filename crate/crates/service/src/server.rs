use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use socialturn::engine::DecisionEngine;
use socialturn::sim::SimConfig;
use tungstenite::{Message, WebSocket};

use crate::protocol::{parse_client, ClientMessage, ErrorCode, ServerMessage};
use crate::session::{session_config, Session, SessionError};

#[derive(Debug, Clone, Copy)]
pub struct ServeConfig {
    /// Wall time between ticks of a paced session.
    pub tick: Duration,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self { tick: Duration::from_millis(100) }
    }
}

struct Shared {
    engine: DecisionEngine,
    default: SimConfig,
    cfg: ServeConfig,
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, engine: DecisionEngine, default: SimConfig, cfg: ServeConfig) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        Ok(Self { listener, shared: Arc::new(Shared { engine, default, cfg }) })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections forever, one thread each.
    pub fn run(self) -> std::io::Result<()> {
        for stream in self.listener.incoming() {
            let stream = stream?;
            let shared = Arc::clone(&self.shared);
            thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = handle(stream, &shared) {
                    log::warn!("connection {peer:?}: {e}");
                }
            });
        }
        Ok(())
    }
}

struct Connection {
    ws: WebSocket<TcpStream>,
    session: Option<Session>,
    lockstep: bool,
    next_tick: Instant,
}

impl Connection {
    fn send(&mut self, msg: &ServerMessage) -> tungstenite::Result<()> {
        self.ws.send(Message::Text(msg.to_json()))
    }

    fn on_text(&mut self, text: &str, shared: &Shared) -> tungstenite::Result<()> {
        let msg = match parse_client(text) {
            Ok(m) => m,
            Err(e) => return self.send(&ServerMessage::error(ErrorCode::MalformedMessage, e.to_string())),
        };
        match msg {
            ClientMessage::Start { .. } if self.session.is_some() => {
                self.send(&ServerMessage::error(ErrorCode::SessionActive, "a session is already running"))
            }
            ClientMessage::Start { seed, config, lockstep } => {
                let started = session_config(&shared.default, config.as_ref(), seed).and_then(|c| Session::new(&c, &shared.engine));
                match started {
                    Ok(s) => {
                        let first = ServerMessage::State(s.state());
                        self.lockstep = lockstep;
                        self.next_tick = Instant::now() + shared.cfg.tick;
                        self.session = Some(s);
                        self.send(&first)?;
                        self.finish_if_over()
                    }
                    Err(SessionError::Config(m)) => self.send(&ServerMessage::error(ErrorCode::InvalidConfig, m)),
                    Err(e) => self.send(&ServerMessage::error(ErrorCode::InvalidConfig, e.to_string())),
                }
            }
            ClientMessage::Control { accel } => {
                let Some(s) = self.session.as_mut() else {
                    return self.send(&ServerMessage::error(ErrorCode::NoSession, "send start first"));
                };
                if !accel.is_finite() {
                    return self.send(&ServerMessage::error(ErrorCode::MalformedMessage, "accel must be finite"));
                }
                s.set_control(accel);
                if self.lockstep {
                    self.advance()?;
                }
                Ok(())
            }
        }
    }

    fn advance(&mut self) -> tungstenite::Result<()> {
        let Some(s) = self.session.as_mut() else { return Ok(()) };
        let state = s.tick().expect("live session");
        self.send(&ServerMessage::State(state))?;
        self.finish_if_over()
    }

    fn finish_if_over(&mut self) -> tungstenite::Result<()> {
        if let Some(end) = self.session.as_ref().filter(|s| s.is_over()).and_then(Session::end) {
            self.session = None;
            self.send(&end)?;
        }
        Ok(())
    }
}

fn handle(stream: TcpStream, shared: &Shared) -> tungstenite::Result<()> {
    let ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::Io(ErrorKind::WouldBlock.into()),
    })?;
    let poll = (shared.cfg.tick / 10).clamp(Duration::from_millis(1), Duration::from_millis(10));
    ws.get_ref().set_read_timeout(Some(poll))?;
    let mut conn = Connection { ws, session: None, lockstep: false, next_tick: Instant::now() };
    let result = serve_connection(&mut conn, shared);
    if let Some(s) = conn.session.as_mut() {
        s.abort();
        log::info!("session aborted at tick {}", s.log().records.len() - 1);
    }
    match result {
        Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => Ok(()),
        other => other,
    }
}

fn serve_connection(conn: &mut Connection, shared: &Shared) -> tungstenite::Result<()> {
    loop {
        match conn.ws.read() {
            Ok(Message::Text(text)) => conn.on_text(&text, shared)?,
            Ok(Message::Binary(_)) => conn.send(&ServerMessage::error(ErrorCode::MalformedMessage, "expected a text message"))?,
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
        if conn.session.is_some() && !conn.lockstep && Instant::now() >= conn.next_tick {
            conn.next_tick += shared.cfg.tick;
            conn.advance()?;
        }
    }
}
