//! Sessions survive restarts and do not interfere with each other.

mod common;

use axum::http::StatusCode;
use common::{app, call, create, prefer};
use serde_json::Value;

const CHOICES: [&str; 6] = ["first", "second", "second", "first", "first", "second"];

#[tokio::test]
async fn restart_replays_to_the_same_state() {
    let live_dir = tempfile::tempdir().unwrap();
    let crash_dir = tempfile::tempdir().unwrap();
    let live = app(live_dir.path());
    let (live_id, _) = create(&live, 10, 11).await;

    let before = app(crash_dir.path());
    let (id, _) = create(&before, 10, 11).await;
    for c in &CHOICES[..3] {
        prefer(&live, &live_id, c).await;
        prefer(&before, &id, c).await;
    }
    let (_, state_before) = call(&before, "GET", &format!("/sessions/{id}"), None).await;
    drop(before);

    let after = app(crash_dir.path());
    let (status, state_after) = call(&after, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK, "{state_after}");
    assert_eq!(state_after, state_before);

    // The restarted session keeps producing exactly what an uninterrupted one does.
    for c in &CHOICES[3..] {
        let (_, a) = prefer(&live, &live_id, c).await;
        let (_, b) = prefer(&after, &id, c).await;
        assert_eq!(a, b);
    }
}

#[tokio::test]
async fn token_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let first = app(dir.path());
    let (id, _) = create(&first, 6, 2).await;
    let uri = format!("/sessions/{id}/preference");
    let body = serde_json::json!({"chosen": "second", "token": "t-1"});
    let (_, original) = call(&first, "POST", &uri, Some(body.clone())).await;
    drop(first);
    let second = app(dir.path());
    let (status, retried) = call(&second, "POST", &uri, Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(retried, original);
    let (_, state) = call(&second, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(state["iteration"], 1);
}

#[tokio::test]
async fn tampered_snapshot_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let first = app(dir.path());
    let (id, _) = create(&first, 8, 3).await;
    prefer(&first, &id, "first").await;
    drop(first);

    let path = dir.path().join("sessions").join(format!("{id}.json"));
    let mut snapshot: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    let phi = snapshot["history"][0]["phi"].as_array_mut().unwrap();
    phi[0] = Value::from(phi[0].as_f64().unwrap() + 1.0);
    std::fs::write(&path, serde_json::to_vec(&snapshot).unwrap()).unwrap();

    let (status, body) = call(&app(dir.path()), "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    assert!(body["error"].as_str().unwrap().contains("replay"), "{body}");
}

#[tokio::test]
async fn sessions_are_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let shared = app(dir.path());
    let (a, _) = create(&shared, 9, 21).await;
    let (b, _) = create(&shared, 12, 22).await;
    let mut interleaved = (Vec::new(), Vec::new());
    for c in CHOICES {
        let (ra, rb) = tokio::join!(
            prefer(&shared, &a, c),
            prefer(&shared, &b, if c == "first" { "second" } else { "first" })
        );
        interleaved.0.push(ra.1);
        interleaved.1.push(rb.1);
    }

    let solo_dir = tempfile::tempdir().unwrap();
    let solo = app(solo_dir.path());
    let (a2, _) = create(&solo, 9, 21).await;
    let (b2, _) = create(&solo, 12, 22).await;
    for (i, c) in CHOICES.iter().enumerate() {
        assert_eq!(prefer(&solo, &a2, c).await.1, interleaved.0[i]);
    }
    for (i, c) in CHOICES.iter().enumerate() {
        assert_eq!(
            prefer(&solo, &b2, if *c == "first" { "second" } else { "first" })
                .await
                .1,
            interleaved.1[i]
        );
    }
    let (_, state_a) = call(&shared, "GET", &format!("/sessions/{a}"), None).await;
    assert_eq!(state_a["history"].as_array().unwrap().len(), CHOICES.len());
}
