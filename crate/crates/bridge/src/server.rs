//! HTTP routes, the WebSocket endpoint and the simulation loop.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc};
use tokio::time::MissedTickBehavior;

use tending_core::config::WorkbenchConfig;

use crate::jobs::{run_job, JobEvent};
use crate::protocol::{ErrorCode, Phase, ServerMessage};
use crate::session::Session;

pub const BROADCAST_HZ: f64 = 30.0;
/// Broadcast backlog per client: two seconds of state frames. A client that
/// falls further behind is disconnected.
pub const BACKLOG: usize = 60;

pub enum LoopInput {
    Client {
        text: String,
        reply: mpsc::UnboundedSender<String>,
    },
    Job(JobEvent),
}

/// What connections hold: the command queue into the loop and the broadcast
/// out of it.
#[derive(Clone)]
pub struct BridgeHandle {
    pub commands: mpsc::UnboundedSender<LoopInput>,
    pub broadcast: broadcast::Sender<String>,
    pub config: Arc<WorkbenchConfig>,
    pub root: Arc<PathBuf>,
}

/// Starts the simulation loop on the current tokio runtime.
pub fn spawn_loop(config: WorkbenchConfig, root: PathBuf) -> BridgeHandle {
    let (tx, mut rx) = mpsc::unbounded_channel::<LoopInput>();
    let (btx, _) = broadcast::channel(BACKLOG);
    let handle = BridgeHandle {
        commands: tx.clone(),
        broadcast: btx.clone(),
        config: Arc::new(config.clone()),
        root: Arc::new(root.clone()),
    };
    let mut session = Session::new(config, &root);
    tokio::spawn(async move {
        let dt = 1.0 / BROADCAST_HZ;
        let mut interval = tokio::time::interval(Duration::from_secs_f64(dt));
        interval.set_missed_tick_behavior(MissedTickBehavior::Skip);
        let start = Instant::now();
        loop {
            tokio::select! {
                _ = interval.tick() => {
                    session.tick(dt);
                    if session.phase() != Phase::Training {
                        let _ = btx.send(session.state_message().to_json());
                    }
                }
                input = rx.recv() => {
                    let Some(input) = input else { break };
                    match input {
                        LoopInput::Client { text, reply } => {
                            let out = session.handle_text(&text, start.elapsed().as_secs_f64());
                            for r in out.replies {
                                let _ = reply.send(r.to_json());
                            }
                            if let Some(job) = out.job {
                                let jobs = tx.clone();
                                std::thread::spawn(move || {
                                    run_job(job, move |ev| {
                                        let _ = jobs.send(LoopInput::Job(ev));
                                    })
                                });
                            }
                        }
                        LoopInput::Job(JobEvent::Progress(msg)) => {
                            let _ = btx.send(msg.to_json());
                        }
                        LoopInput::Job(JobEvent::Trained(result)) => {
                            let _ = btx.send(session.training_finished(result).to_json());
                        }
                        LoopInput::Job(JobEvent::Executed(result)) => {
                            let _ = btx.send(session.execution_finished(result).to_json());
                        }
                    }
                }
            }
        }
    });
    handle
}

pub fn router(handle: BridgeHandle) -> Router {
    Router::new()
        .route("/health", get(|| async { json_response(r#"{"ok":true}"#.to_string()) }))
        .route("/config", get(config_route))
        .route("/artifacts/{name}", get(artifact_route))
        .route("/ws", get(ws_route))
        .with_state(handle)
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, config: WorkbenchConfig, root: PathBuf) -> std::io::Result<()> {
    let handle = spawn_loop(config, root);
    axum::serve(listener, router(handle)).await
}

fn json_response(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn config_route(State(h): State<BridgeHandle>) -> Response {
    json_response(h.config.to_json())
}

async fn artifact_route(State(h): State<BridgeHandle>, Path(name): Path<String>) -> Response {
    let rel = match name.as_str() {
        "traj" => &h.config.paths.traj,
        "policy" => &h.config.paths.policy,
        "report" => &h.config.paths.report,
        _ => return (StatusCode::NOT_FOUND, "unknown artifact").into_response(),
    };
    match tokio::fs::read(h.root.join(rel)).await {
        Ok(bytes) => {
            let kind = if name == "traj" { "application/jsonl" } else { "application/json" };
            ([(header::CONTENT_TYPE, kind)], bytes).into_response()
        }
        Err(_) => (StatusCode::NOT_FOUND, format!("{name} not written yet")).into_response(),
    }
}

async fn ws_route(ws: WebSocketUpgrade, State(h): State<BridgeHandle>) -> Response {
    ws.on_upgrade(move |socket| client(socket, h))
}

async fn client(socket: WebSocket, h: BridgeHandle) {
    let (mut sink, mut stream) = socket.split();
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<String>();
    let mut frames = h.broadcast.subscribe();

    let writer = async move {
        loop {
            let text = tokio::select! {
                r = reply_rx.recv() => match r {
                    Some(t) => t,
                    None => break,
                },
                b = frames.recv() => match b {
                    Ok(t) => t,
                    Err(broadcast::error::RecvError::Lagged(_)) => {
                        let _ = sink.send(Message::Close(None)).await;
                        break;
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                },
            };
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    };

    let reader = async move {
        while let Some(Ok(msg)) = stream.next().await {
            match msg {
                Message::Text(t) => {
                    let input = LoopInput::Client {
                        text: t.to_string(),
                        reply: reply_tx.clone(),
                    };
                    if h.commands.send(input).is_err() {
                        break;
                    }
                }
                Message::Binary(_) => {
                    let err = ServerMessage::error(ErrorCode::BadMessage, "binary frames are not accepted");
                    let _ = reply_tx.send(err.to_json());
                }
                Message::Close(_) => break,
                _ => {}
            }
        }
    };

    tokio::select! {
        _ = writer => {}
        _ = reader => {}
    }
}
