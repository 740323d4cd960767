//! A scripted headless client drives a full session over the socket.

use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use tending_core::config::WorkbenchConfig;
use tending_core::servo::dvsp_from_dgp;
use tending_core::workflow::{intended_dfp, object_rest_pose};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start(root: &std::path::Path) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let root = root.to_path_buf();
    tokio::spawn(tending_bridge::serve(listener, WorkbenchConfig::default(), root));
    addr
}

async fn http_get(addr: SocketAddr, path: &str) -> (u16, String) {
    let mut s = TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n");
    s.write_all(req.as_bytes()).await.unwrap();
    let mut buf = String::new();
    s.read_to_string(&mut buf).await.unwrap();
    let status = buf[9..12].parse().unwrap();
    let body = buf.split_once("\r\n\r\n").unwrap().1.to_string();
    (status, body)
}

async fn next_json(ws: &mut Ws) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(60), ws.next())
            .await
            .expect("server went quiet")
            .expect("socket closed")
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

/// Reads frames until one has the given type, skipping state broadcasts.
async fn wait_for(ws: &mut Ws, kind: &str) -> Value {
    loop {
        let v = next_json(ws).await;
        if v["type"] == kind {
            return v;
        }
        assert_ne!(v["type"], "error", "{v}");
    }
}

/// Drains buffered frames and returns the newest state.
async fn latest_state(ws: &mut Ws) -> Value {
    let mut latest = wait_for(ws, "state").await;
    while let Ok(v) = tokio::time::timeout(Duration::from_millis(5), next_json(ws)).await {
        if v["type"] == "state" {
            latest = v;
        }
    }
    latest
}

async fn send(ws: &mut Ws, v: Value) {
    ws.send(Message::Text(v.to_string().into())).await.unwrap();
}

async fn command(ws: &mut Ws, v: Value) -> u64 {
    send(ws, v).await;
    wait_for(ws, "ack").await["seq"].as_u64().unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn headless_teach_train_execute() {
    let dir = tempfile::tempdir().unwrap();
    let config = WorkbenchConfig::default();
    let addr = start(dir.path()).await;

    assert_eq!(http_get(addr, "/health").await, (200, r#"{"ok":true}"#.to_string()));
    assert_eq!(http_get(addr, "/config").await.1, config.to_json());
    assert_eq!(http_get(addr, "/artifacts/policy").await.0, 404);

    let url = format!("ws://{addr}/ws");
    let (mut a, _) = connect_async(&url).await.unwrap();
    let (mut b, _) = connect_async(&url).await.unwrap();

    // the observer records every broadcast until execution ends
    let observer = tokio::spawn(async move {
        let mut seen = Vec::new();
        loop {
            let v = next_json(&mut b).await;
            let done = v["type"] == "exec_done";
            if v["type"] != "state" {
                seen.push(v.to_string());
            }
            if done {
                return seen;
            }
        }
    });

    let first = next_json(&mut a).await;
    assert_eq!(first["type"], "state");
    assert_eq!(first["phase"], "Idle");

    let mut seqs = vec![command(&mut a, json!({"type": "hello"})).await];
    send(&mut a, json!({"type": "start_training", "seed": 1})).await;
    assert_eq!(wait_for(&mut a, "error").await["code"], "wrong_phase");
    for t in ["capture_dgp", "capture_dvsp", "start_follow"] {
        seqs.push(command(&mut a, json!({"type": t})).await);
    }

    // drag the object from its rest pose to the hole in 2 mm steps
    let from = object_rest_pose(&config);
    let to = intended_dfp(&config);
    let span = to.position() - from.position();
    let steps = (span.norm() / 0.002).ceil() as usize;
    for i in 1..=steps {
        let pose = from.translated(&(span * (i as f64 / steps as f64)));
        send(&mut a, json!({"type": "drag_object", "pose": pose})).await;
        seqs.push(wait_for(&mut a, "ack").await["seq"].as_u64().unwrap());
        tokio::time::sleep(Duration::from_millis(40)).await;
    }
    tokio::time::sleep(Duration::from_millis(1500)).await;
    let state = latest_state(&mut a).await;
    assert_eq!(state["phase"], "Following");
    let ee: tending_core::Pose = serde_json::from_value(state["ee_pose"].clone()).unwrap();
    let expected = dvsp_from_dgp(&to, config.teach.dvsp_height);
    let lag = (ee.position() - expected.position()).norm();
    assert!(lag < 2e-3, "robot should hover over the dragged object, lag {lag}");

    send(&mut a, json!({"type": "finish_teaching"})).await;
    seqs.push(wait_for(&mut a, "ack").await["seq"].as_u64().unwrap());
    let done = wait_for(&mut a, "teach_done").await;
    let dfp: tending_core::Pose = serde_json::from_value(done["dfp"].clone()).unwrap();
    assert!((dfp.position() - to.position()).norm() < 1e-3, "{dfp:?}");
    assert!(done["duration"].as_f64().unwrap() > 1.0);
    assert_eq!(http_get(addr, "/artifacts/traj").await.0, 200);

    seqs.push(command(&mut a, json!({"type": "start_training", "seed": 1, "episodes": 3})).await);
    let p = wait_for(&mut a, "progress").await;
    assert_eq!(p["episode"], 0);
    let trained = wait_for(&mut a, "train_done").await;
    assert!(trained["policy_path"].as_str().unwrap().ends_with("policy.json"));
    assert_eq!(http_get(addr, "/artifacts/policy").await.0, 200);

    send(
        &mut a,
        json!({"type": "start_execution", "method": "rrrl", "group": "uncertainty", "trials": 3}),
    )
    .await;
    seqs.push(wait_for(&mut a, "ack").await["seq"].as_u64().unwrap());
    let report = wait_for(&mut a, "exec_done").await;
    assert_eq!(report["report"]["execution"][0]["trials"], 3);
    let (status, body) = http_get(addr, "/artifacts/report").await;
    assert_eq!(status, 200);
    let on_disk: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(on_disk, report["report"]);

    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1), "{seqs:?}");

    // the observer saw the same progress and completion broadcasts
    let seen = observer.await.unwrap();
    let kinds: Vec<Value> = seen.iter().map(|s| serde_json::from_str::<Value>(s).unwrap()["type"].clone()).collect();
    assert_eq!(kinds.iter().filter(|k| *k == "progress").count(), 3);
    assert!(kinds.contains(&json!("train_done")));
    assert_eq!(serde_json::from_str::<Value>(seen.last().unwrap()).unwrap(), report);
}
