mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use common::spawn_app;
use pacing_core::backend::{BackendError, ChatBackend, ChatMessage};
use pacing_core::generator::{Generator, GeneratorRequest, LlmGenerator, Purpose, FALLBACK_TEXT};
use pacing_core::memory::ContextWindow;
use pacing_core::prompts::Persona;
use pacing_core::scheduler::PacingMode;
use pacing_core::strategy::Strategy;
use pacing_gateway::{Backoff, HttpChatBackend, RemoteConfig};
use serde_json::{json, Value};

#[derive(Clone)]
struct Script {
    hits: Arc<AtomicUsize>,
    /// What each request gets, by arrival order; the last entry repeats.
    plan: Arc<Vec<Step>>,
    auth: Arc<Mutex<Vec<Option<String>>>>,
}

#[derive(Clone, Copy)]
enum Step {
    Hang,
    Status(u16),
    Reply(&'static str),
}

async fn scripted(State(s): State<Script>, headers: HeaderMap, Json(_): Json<Value>) -> Response {
    let n = s.hits.fetch_add(1, Ordering::SeqCst);
    s.auth.lock().unwrap().push(headers.get("authorization").map(|v| v.to_str().unwrap().to_string()));
    match s.plan[n.min(s.plan.len() - 1)] {
        Step::Hang => {
            tokio::time::sleep(Duration::from_millis(800)).await;
            StatusCode::OK.into_response()
        }
        Step::Status(code) => StatusCode::from_u16(code).unwrap().into_response(),
        Step::Reply(text) => Json(json!({ "choices": [{ "message": { "content": text } }] })).into_response(),
    }
}

async fn server(plan: Vec<Step>) -> (String, Script) {
    let script =
        Script { hits: Arc::new(AtomicUsize::new(0)), plan: Arc::new(plan), auth: Arc::new(Mutex::new(Vec::new())) };
    let app = Router::new().route("/v1/chat/completions", post(scripted)).with_state(script.clone());
    (format!("{}/v1", spawn_app(app).await), script)
}

fn backend(base_url: String, token_env: &str) -> (HttpChatBackend, Arc<Mutex<Vec<Duration>>>) {
    let slept = Arc::new(Mutex::new(Vec::new()));
    let log = slept.clone();
    let cfg = RemoteConfig {
        base_url,
        model_name: "test-model".into(),
        auth_token_env_var_name: token_env.into(),
        timeout_ms: 200,
        max_retries: 2,
    };
    let b = HttpChatBackend::new(cfg).with_backoff(Backoff::default(), Arc::new(move |d| log.lock().unwrap().push(d)));
    (b, slept)
}

async fn complete(b: HttpChatBackend) -> (HttpChatBackend, Result<String, BackendError>) {
    tokio::task::spawn_blocking(move || {
        let r = b.complete(&[ChatMessage::user("hi")]);
        (b, r)
    })
    .await
    .unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn two_timeouts_then_success() {
    let (url, script) = server(vec![Step::Hang, Step::Hang, Step::Reply("<p>Hello.</p>")]).await;
    let (b, slept) = backend(url, "PACING_TEST_TOKEN_A");
    std::env::set_var("PACING_TEST_TOKEN_A", "s3cret");
    let (_, r) = complete(b).await;
    assert_eq!(r.unwrap(), "<p>Hello.</p>");
    assert_eq!(script.hits.load(Ordering::SeqCst), 3);
    assert_eq!(*slept.lock().unwrap(), vec![Duration::from_millis(250), Duration::from_millis(500)]);
    assert!(script.auth.lock().unwrap().iter().all(|a| a.as_deref() == Some("Bearer s3cret")));
}

#[tokio::test(flavor = "multi_thread")]
async fn exhausted_retries_degrade_the_turn() {
    let (url, script) = server(vec![Step::Status(503)]).await;
    let (b, slept) = backend(url, "PACING_TEST_TOKEN_UNSET");
    let (b, r) = complete(b).await;
    assert!(matches!(r, Err(BackendError::Unavailable { attempts: 3, .. })));
    assert_eq!(slept.lock().unwrap().len(), 2);
    assert!(script.auth.lock().unwrap().iter().all(Option::is_none));

    let gen = LlmGenerator::new(Arc::new(b));
    let req = GeneratorRequest {
        persona: Persona::Career,
        mode: PacingMode::ContextAware,
        purpose: Purpose::Reply,
        strategy: Some(Strategy::Resolve),
        context: ContextWindow::empty(),
        user_message: "How do I ask for a raise?".into(),
    };
    let g = tokio::task::spawn_blocking(move || gen.generate(&req)).await.unwrap().unwrap();
    assert_eq!(g.text, FALLBACK_TEXT);
    assert!(g.degraded);
}

#[tokio::test(flavor = "multi_thread")]
async fn client_errors_are_not_retried() {
    let (url, script) = server(vec![Step::Status(401)]).await;
    let (b, slept) = backend(url, "PACING_TEST_TOKEN_UNSET");
    let (_, r) = complete(b).await;
    assert!(matches!(r, Err(BackendError::Unavailable { attempts: 1, .. })));
    assert_eq!(script.hits.load(Ordering::SeqCst), 1);
    assert!(slept.lock().unwrap().is_empty());
}

#[tokio::test(flavor = "multi_thread")]
async fn rate_limits_are_retried() {
    let (url, script) = server(vec![Step::Status(429), Step::Reply("ok")]).await;
    let (b, _) = backend(url, "PACING_TEST_TOKEN_UNSET");
    let (_, r) = complete(b).await;
    assert_eq!(r.unwrap(), "ok");
    assert_eq!(script.hits.load(Ordering::SeqCst), 2);
}
