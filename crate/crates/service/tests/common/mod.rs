#![allow(dead_code)]

use std::path::Path;

use apohf_service::{router, AppState, EmbeddingClient, SnapshotStore};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

pub fn app(dir: &Path) -> Router {
    app_with(dir, None, None)
}

pub fn app_with(dir: &Path, domains: Option<&Path>, embedder: Option<EmbeddingClient>) -> Router {
    let store = SnapshotStore::open(dir.join("sessions")).unwrap();
    router(AppState::new(
        store,
        domains.map(Path::to_path_buf),
        embedder,
    ))
}

pub async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX)
        .await
        .unwrap();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

/// `n` arms on a small deterministic grid in two dimensions.
pub fn arms(n: usize) -> Vec<Value> {
    (0..n)
        .map(|i| {
            let a = i as f64 * 0.7;
            json!({"id": format!("a{i}"), "text": format!("candidate {i}"), "embedding": [a.cos(), a.sin() * (1.0 + i as f64 / n as f64)]})
        })
        .collect()
}

pub fn fast_config(seed: u64) -> Value {
    json!({"seed": seed, "epochs": 40})
}

pub async fn create(app: &Router, n: usize, seed: u64) -> (String, Value) {
    let (status, body) = call(
        app,
        "POST",
        "/sessions",
        Some(json!({"domain": arms(n), "config": fast_config(seed)})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    (body["session_id"].as_str().unwrap().to_owned(), body)
}

pub async fn prefer(app: &Router, id: &str, chosen: &str) -> (StatusCode, Value) {
    call(
        app,
        "POST",
        &format!("/sessions/{id}/preference"),
        Some(json!({"chosen": chosen})),
    )
    .await
}
