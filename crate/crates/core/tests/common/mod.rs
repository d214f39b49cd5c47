//! Scripted chat-completions server for campaign tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use bwsq_core::annotate::LlmEndpointConfig;
use serde_json::{json, Value};

#[derive(Default)]
pub struct Script {
    /// Answer per user prompt; prompts not listed get `fallback`.
    pub answers: HashMap<String, String>,
    pub fallback: String,
    /// HTTP status to return instead of an answer.
    pub status: Option<u16>,
    /// Requests beyond this count never get a response.
    pub hang_after: Option<usize>,
}

pub struct MockLlm {
    pub addr: SocketAddr,
    pub requests: Arc<AtomicUsize>,
    /// User prompts in arrival order.
    pub log: Arc<Mutex<Vec<String>>>,
    pub bodies: Arc<Mutex<Vec<(Option<String>, Value)>>>,
    pub script: Arc<Mutex<Script>>,
}

#[derive(Clone)]
struct Shared {
    requests: Arc<AtomicUsize>,
    log: Arc<Mutex<Vec<String>>>,
    bodies: Arc<Mutex<Vec<(Option<String>, Value)>>>,
    script: Arc<Mutex<Script>>,
}

async fn complete(State(s): State<Shared>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    let n = s.requests.fetch_add(1, Ordering::SeqCst) + 1;
    let user = body["messages"][1]["content"].as_str().unwrap_or_default().to_owned();
    let auth = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .map(str::to_owned);
    s.log.lock().unwrap().push(user.clone());
    s.bodies.lock().unwrap().push((auth, body));
    let (hang, status, answer) = {
        let sc = s.script.lock().unwrap();
        let hang = sc.hang_after.is_some_and(|h| n > h);
        let answer = sc.answers.get(&user).cloned().unwrap_or_else(|| sc.fallback.clone());
        (hang, sc.status, answer)
    };
    if hang {
        std::future::pending::<()>().await;
    }
    if let Some(code) = status {
        return (StatusCode::from_u16(code).unwrap(), "scripted failure").into_response();
    }
    Json(json!({
        "id": format!("cmpl-{n}"),
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": answer}, "finish_reason": "stop"}],
    }))
    .into_response()
}

impl MockLlm {
    pub async fn start(script: Script) -> Self {
        let shared = Shared {
            requests: Arc::new(AtomicUsize::new(0)),
            log: Arc::new(Mutex::new(Vec::new())),
            bodies: Arc::new(Mutex::new(Vec::new())),
            script: Arc::new(Mutex::new(script)),
        };
        let app = Router::new()
            .route("/v1/chat/completions", post(complete))
            .with_state(shared.clone());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
        Self {
            addr,
            requests: shared.requests,
            log: shared.log,
            bodies: shared.bodies,
            script: shared.script,
        }
    }

    pub fn config(&self) -> LlmEndpointConfig {
        LlmEndpointConfig {
            base_url: format!("http://{}/v1", self.addr),
            model_name: "mock-model".into(),
            api_key: Some("test-key".into()),
            max_retries: 0,
            parallelism: 1,
            retry_backoff_ms: 1,
            timeout_secs: 30,
            ..LlmEndpointConfig::default()
        }
    }

    pub fn count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn prompts(&self) -> Vec<String> {
        self.log.lock().unwrap().clone()
    }
}
