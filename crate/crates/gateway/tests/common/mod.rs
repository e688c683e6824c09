#![allow(dead_code)]

use std::net::SocketAddr;

use axum::Router;
use pacing_core::wire::WireRecord;
use pacing_gateway::{serve_with_shutdown, AppState};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub struct Running {
    pub base: String,
    pub stop: Option<oneshot::Sender<()>>,
    pub task: JoinHandle<()>,
}

impl Running {
    pub async fn stop(mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        let _ = self.task.await;
    }
}

pub async fn start_gateway(state: AppState) -> Running {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr: SocketAddr = listener.local_addr().unwrap();
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        serve_with_shutdown(listener, state, async {
            let _ = rx.await;
        })
        .await
        .unwrap();
    });
    Running { base: format!("http://{addr}"), stop: Some(tx), task }
}

/// Serves `app` on an ephemeral port and returns its base URL.
pub async fn spawn_app(app: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    format!("http://{addr}")
}

/// Reads an NDJSON response until `terminals` terminal records were seen
/// or the stream ends.
pub async fn read_lines(mut resp: reqwest::Response, terminals: usize) -> Vec<String> {
    let mut buf = String::new();
    let mut lines = Vec::new();
    let mut seen = 0;
    while seen < terminals {
        let Some(chunk) = resp.chunk().await.unwrap() else { break };
        buf.push_str(std::str::from_utf8(&chunk).unwrap());
        while let Some(pos) = buf.find('\n') {
            let line: String = buf.drain(..=pos).collect();
            let rec: WireRecord = serde_json::from_str(line.trim_end()).unwrap();
            if rec.is_terminal() {
                seen += 1;
            }
            lines.push(line);
        }
    }
    lines
}
