use std::collections::HashMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use tokio::net::TcpListener;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::session::protocol::{parse_client, ClientBody, ServerBody, ServerMessage, StartRequest};
use crate::session::state::{start_session, Session, SessionConfig};
use crate::session::{ControlEvent, Phase};
use crate::sim::generate_scenario;

const MAX_RATE_HZ: f64 = 1000.0;

/// Where `checkpoint_id`s resolve to ensembles.
#[derive(Debug, Clone)]
pub enum CheckpointStore {
    /// `<dir>/<id>.ckpt`
    Directory(PathBuf),
    /// Named in-memory ensembles, replaceable while serving.
    Memory(Arc<RwLock<HashMap<String, Arc<Ensemble>>>>),
}

impl CheckpointStore {
    pub fn memory(entries: impl IntoIterator<Item = (String, Ensemble)>) -> Self {
        let map = entries.into_iter().map(|(k, v)| (k, Arc::new(v))).collect();
        CheckpointStore::Memory(Arc::new(RwLock::new(map)))
    }

    /// Replaces an in-memory entry; no-op for directory stores.
    pub fn insert(&self, id: &str, ensemble: Ensemble) {
        if let CheckpointStore::Memory(m) = self {
            m.write().expect("checkpoint store lock").insert(id.to_string(), Arc::new(ensemble));
        }
    }

    pub fn load(&self, id: &str) -> Result<Arc<Ensemble>> {
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::SessionRejected(format!("invalid checkpoint id {id:?}")));
        }
        match self {
            CheckpointStore::Directory(dir) => {
                let path = dir.join(format!("{id}.ckpt"));
                Ensemble::load(&path).map(Arc::new).map_err(|e| Error::SessionRejected(e.to_string()))
            }
            CheckpointStore::Memory(m) => m
                .read()
                .expect("checkpoint store lock")
                .get(id)
                .cloned()
                .ok_or_else(|| Error::SessionRejected(format!("unknown checkpoint {id:?}"))),
        }
    }
}

/// Receives every session once it ends.
pub trait SessionSink: Send + Sync {
    fn session_finished(&self, session: &Session);
}

impl SessionSink for () {
    fn session_finished(&self, _: &Session) {}
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub road_length: f64,
    pub checkpoints: CheckpointStore,
    /// Defaults for new sessions; `rate_hz` comes from the start request.
    pub session: SessionConfig,
}

struct Shared {
    config: ServerConfig,
    sink: Arc<dyn SessionSink>,
    next_id: AtomicU64,
    next_rollout: AtomicU32,
}

/// Serves sessions over WebSocket at `/ws` until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    config: ServerConfig,
    sink: Arc<dyn SessionSink>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<()> {
    let shared = Arc::new(Shared {
        config,
        sink,
        next_id: AtomicU64::new(0),
        next_rollout: AtomicU32::new(0),
    });
    let app = Router::new().route("/ws", get(upgrade)).with_state(shared);
    let addr = listener.local_addr().ok();
    log::info!("session service listening on {addr:?}");
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| Error::io(PathBuf::from("<socket>"), e))
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, shared))
}

async fn send(socket: &mut WebSocket, msg: ServerMessage) -> bool {
    socket.send(Message::Text(msg.to_json().into())).await.is_ok()
}

fn open_session(shared: &Shared, req: &StartRequest) -> Result<Session> {
    if !(req.rate_hz > 0.0 && req.rate_hz <= MAX_RATE_HZ) {
        return Err(Error::SessionRejected(format!("rate_hz must lie in (0, {MAX_RATE_HZ}]")));
    }
    let ensemble = shared.config.checkpoints.load(&req.checkpoint_id)?;
    let scenario = generate_scenario(req.scenario_seed, shared.config.road_length)
        .map_err(|e| Error::SessionRejected(e.to_string()))?;
    let config = SessionConfig {
        rate_hz: req.rate_hz,
        rollout: shared.next_rollout.fetch_add(1, Ordering::SeqCst),
        ..shared.config.session.clone()
    };
    let id = format!("s{:06}", shared.next_id.fetch_add(1, Ordering::SeqCst));
    start_session(id, scenario, ensemble, config)
}

async fn connection(mut socket: WebSocket, shared: Arc<Shared>) {
    let req = loop {
        match socket.recv().await {
            Some(Ok(Message::Text(text))) => match parse_client(&text) {
                Ok(ClientBody::Start(req)) => break req,
                Ok(ClientBody::Event(_)) => {
                    let err = Error::NotFound("no session started on this connection".into());
                    if !send(&mut socket, ServerMessage::error(&err)).await {
                        return;
                    }
                }
                Err(e) => {
                    if !send(&mut socket, ServerMessage::error(&e)).await {
                        return;
                    }
                }
            },
            Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
            Some(Ok(_)) => {}
        }
    };
    let mut session = match open_session(&shared, &req) {
        Ok(s) => s,
        Err(e) => {
            send(&mut socket, ServerMessage::error(&e)).await;
            return;
        }
    };
    log::info!("session {} started on scenario {}", session.id(), req.scenario_seed);
    let mut interval = tokio::time::interval(session.tick_interval());
    interval.tick().await;
    let first = session.snapshot();
    if !send(&mut socket, ServerMessage::new(ServerBody::Snapshot(first))).await {
        session.finish();
        shared.sink.session_finished(&session);
        return;
    }
    loop {
        tokio::select! {
            _ = interval.tick() => {
                let body = match session.tick() {
                    Ok(snap) => ServerBody::Snapshot(snap),
                    Err(e) => {
                        log::error!("session {}: {e}", session.id());
                        session.finish();
                        send(&mut socket, ServerMessage::error(&e)).await;
                        break;
                    }
                };
                if !send(&mut socket, ServerMessage::new(body)).await {
                    session.finish();
                    break;
                }
                if session.phase() == Phase::Finished {
                    let done = ServerBody::Finished {
                        labels: session.dataset().len(),
                        interventions: session.interventions().len(),
                    };
                    send(&mut socket, ServerMessage::new(done)).await;
                    break;
                }
            }
            msg = socket.recv() => match msg {
                Some(Ok(Message::Text(text))) => match parse_client(&text) {
                    Ok(ClientBody::Event(ev)) => {
                        if let Err(e) = session.handle_event(ControlEvent::from(&ev)) {
                            send(&mut socket, ServerMessage::error(&e)).await;
                        }
                    }
                    Ok(ClientBody::Start(_)) => {
                        let err = Error::invalid("session already started on this connection");
                        send(&mut socket, ServerMessage::error(&err)).await;
                    }
                    Err(e) => {
                        send(&mut socket, ServerMessage::error(&e)).await;
                    }
                },
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => {
                    session.finish();
                    break;
                }
                Some(Ok(_)) => {}
            }
        }
    }
    log::info!(
        "session {} ended at tick {} with {} labels",
        session.id(),
        session.tick_count(),
        session.dataset().len()
    );
    shared.sink.session_finished(&session);
}
