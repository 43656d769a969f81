use std::io::{BufRead, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use tracing::{debug, warn};

use super::authority::{Command, Outbox};
use super::protocol::{frame_message, ClientMessage, ServerMessage, PROTOCOL_VERSION};
use super::{AuditLog, AuthorityHandle, NodeControl, ServerError, Session, TokenTable};
use crate::baseline::Baseline;
use crate::history::{self, ReplayWindow};
use crate::ingest::TripleStore;

const MAX_LINE: u64 = 64 * 1024;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub addr: String,
    /// Messages buffered per client before it is disconnected as too slow.
    pub client_queue: usize,
    pub audit_log: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:0".into(),
            client_queue: 256,
            audit_log: None,
        }
    }
}

struct Shared {
    tokens: TokenTable,
    authority: AuthorityHandle,
    history: Option<(Arc<TripleStore>, Arc<Baseline>)>,
    queue: usize,
    next_session: AtomicU64,
}

pub struct StateServer {
    authority: AuthorityHandle,
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    owner: Option<JoinHandle<()>>,
}

impl StateServer {
    /// `history`, when given, lets clients request replays.
    pub fn start(
        config: &ServerConfig,
        tokens: TokenTable,
        baseline: Arc<Baseline>,
        adapter: Box<dyn NodeControl>,
        history: Option<Arc<TripleStore>>,
    ) -> Result<Self, ServerError> {
        let audit = match &config.audit_log {
            Some(p) => AuditLog::open(p)?,
            None => AuditLog::in_memory(),
        };
        let listener = TcpListener::bind(&config.addr)
            .map_err(|e| ServerError::Bind(format!("{}: {e}", config.addr)))?;
        let addr = listener.local_addr()?;
        let (authority, owner) = AuthorityHandle::spawn(baseline.clone(), adapter, audit);
        let shared = Arc::new(Shared {
            tokens,
            authority: authority.clone(),
            history: history.map(|h| (h, baseline)),
            queue: config.client_queue.max(1),
            next_session: AtomicU64::new(1),
        });
        let stop = Arc::new(AtomicBool::new(false));
        let accept = {
            let stop = stop.clone();
            thread::Builder::new()
                .name("server-accept".into())
                .spawn(move || {
                    for conn in listener.incoming() {
                        if stop.load(Ordering::SeqCst) {
                            break;
                        }
                        match conn {
                            Ok(stream) => {
                                let shared = shared.clone();
                                thread::spawn(move || serve_conn(stream, &shared));
                            }
                            Err(e) => warn!("accept failed: {e}"),
                        }
                    }
                })?
        };
        Ok(Self {
            authority,
            addr,
            stop,
            accept: Some(accept),
            owner: Some(owner),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn authority(&self) -> AuthorityHandle {
        self.authority.clone()
    }

    pub fn shutdown(&mut self) {
        if let Some(h) = self.accept.take() {
            self.stop.store(true, Ordering::SeqCst);
            let _ = TcpStream::connect(self.addr);
            let _ = h.join();
        }
        if let Some(h) = self.owner.take() {
            self.authority.stop();
            let _ = h.join();
        }
    }
}

impl Drop for StateServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn read_line<R: BufRead>(reader: &mut R, buf: &mut Vec<u8>) -> std::io::Result<usize> {
    buf.clear();
    let n = reader.by_ref().take(MAX_LINE).read_until(b'\n', buf)?;
    if n > 0 && !buf.ends_with(b"\n") && n as u64 == MAX_LINE {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "line too long",
        ));
    }
    Ok(n)
}

fn reject(mut stream: &TcpStream, msg: ServerMessage) {
    let _ = stream.write_all(&msg.encode());
    let _ = stream.shutdown(Shutdown::Both);
}

fn writer(mut stream: TcpStream, rx: Receiver<Arc<Vec<u8>>>) {
    for msg in rx {
        if stream.write_all(&msg).is_err() {
            break;
        }
    }
    let _ = stream.shutdown(Shutdown::Both);
}

fn serve_conn(stream: TcpStream, shared: &Shared) {
    let _ = stream.set_nodelay(true);
    let mut reader = BufReader::new(match stream.try_clone() {
        Ok(s) => s,
        Err(e) => {
            warn!("clone failed: {e}");
            return;
        }
    });
    let mut line = Vec::new();
    if !matches!(read_line(&mut reader, &mut line), Ok(n) if n > 0) {
        return;
    }
    let (principal, credential) = match serde_json::from_slice::<ClientMessage>(&line) {
        Ok(ClientMessage::Hello {
            v,
            principal,
            credential,
        }) if v == PROTOCOL_VERSION => (principal, credential),
        Ok(ClientMessage::Hello { v, .. }) => {
            return reject(
                &stream,
                ServerMessage::error(format!("unsupported protocol version {v}")),
            );
        }
        Ok(_) => return reject(&stream, ServerMessage::error("expected Hello")),
        Err(e) => {
            return reject(
                &stream,
                ServerMessage::error(format!("malformed message: {e}")),
            )
        }
    };
    let Some(tier) = shared.tokens.authenticate(&principal, &credential) else {
        debug!(%principal, "authentication failed");
        return reject(
            &stream,
            ServerMessage::AuthResult {
                v: PROTOCOL_VERSION,
                ok: false,
                tier: None,
                session_id: None,
                reason: Some("bad credential".into()),
            },
        );
    };
    let session = Session {
        session_id: shared.next_session.fetch_add(1, Ordering::SeqCst),
        principal,
        tier,
        connected_at: super::unix_now(),
    };
    let (tx, rx) = sync_channel(shared.queue);
    let (Ok(write_half), Ok(owner_half)) = (stream.try_clone(), stream.try_clone()) else {
        return;
    };
    let writer = thread::spawn(move || writer(write_half, rx));
    let auth = ServerMessage::AuthResult {
        v: PROTOCOL_VERSION,
        ok: true,
        tier: Some(tier),
        session_id: Some(session.session_id),
        reason: None,
    };
    let registered = tx.send(Arc::new(auth.encode())).is_ok()
        && shared
            .authority
            .command(Command::Register {
                session: session.clone(),
                outbox: tx.clone(),
                conn: Some(owner_half),
            })
            .is_ok();
    if registered {
        if let Err(reason) = session_loop(&mut reader, &session, &tx, shared) {
            let _ = tx.send(Arc::new(ServerMessage::error(reason).encode()));
        }
    }
    let _ = shared
        .authority
        .command(Command::Unregister(session.session_id));
    drop(tx);
    let _ = writer.join();
    let _ = stream.shutdown(Shutdown::Both);
}

/// Serves requests until the client hangs up (`Ok`) or breaks the protocol
/// (`Err` with the reason to report).
fn session_loop<R: BufRead>(
    reader: &mut R,
    session: &Session,
    tx: &Outbox,
    shared: &Shared,
) -> Result<(), String> {
    let mut line = Vec::new();
    let send = |msg: Vec<u8>| {
        tx.send(Arc::new(msg))
            .map_err(|_| "disconnected".to_string())
    };
    loop {
        match read_line(reader, &mut line) {
            Ok(0) | Err(_) => return Ok(()),
            Ok(_) => {}
        }
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let msg: ClientMessage =
            serde_json::from_slice(&line).map_err(|e| format!("malformed message: {e}"))?;
        if msg.version() != PROTOCOL_VERSION {
            return Err(format!("unsupported protocol version {}", msg.version()));
        }
        match msg {
            ClientMessage::Hello { .. } => return Err("already authenticated".into()),
            ClientMessage::Action {
                request_id,
                verb,
                target,
                comment,
                ..
            } => {
                let (action_id, outcome) = shared
                    .authority
                    .handle_action(session, verb, &target, comment.as_deref())
                    .map_err(|e| e.to_string())?;
                send(
                    ServerMessage::ActionResult {
                        v: PROTOCOL_VERSION,
                        request_id,
                        action_id,
                        outcome,
                    }
                    .encode(),
                )?;
            }
            ClientMessage::Pull {
                request_id,
                selector,
                ..
            } => {
                let answer = shared.authority.pull(selector).map_err(|e| e.to_string())?;
                send(
                    ServerMessage::PullResult {
                        v: PROTOCOL_VERSION,
                        request_id,
                        entities: answer.entities,
                        co_scheduled: answer.co_scheduled,
                    }
                    .encode(),
                )?;
            }
            ClientMessage::Replay {
                request_id,
                at,
                before,
                after,
                ..
            } => {
                let Some((store, baseline)) = &shared.history else {
                    send(ServerMessage::error("replay not available").encode())?;
                    continue;
                };
                match history::replay(store, baseline, &ReplayWindow { at, before, after }) {
                    Ok(frames) => {
                        for f in &frames {
                            send(frame_message(f, true))?;
                        }
                        send(
                            ServerMessage::ReplayResult {
                                v: PROTOCOL_VERSION,
                                request_id,
                                frames: frames.len() as u32,
                            }
                            .encode(),
                        )?;
                    }
                    Err(e) => send(ServerMessage::error(e.to_string()).encode())?,
                }
            }
        }
    }
}
