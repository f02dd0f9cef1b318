mod common;

use axum::http::StatusCode;
use common::{app, arms, call, create, fast_config, prefer};
use serde_json::json;

#[tokio::test]
async fn create_returns_a_distinct_pair() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (_, body) = create(&app, 8, 1).await;
    let first = body["pair"]["first"]["id"].as_str().unwrap();
    let second = body["pair"]["second"]["id"].as_str().unwrap();
    assert_ne!(first, second);
    assert!(body["pair"]["first"]["text"]
        .as_str()
        .unwrap()
        .starts_with("candidate"));
    assert_eq!(body["iteration"], 0);
}

#[tokio::test]
async fn invalid_domains_are_422() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    for body in [
        json!({"domain": []}),
        json!({"domain_jsonl": ""}),
        json!({"config": {"seed": 1}}),
        json!({"domain": arms(3), "domain_jsonl": ""}),
        json!({"domain": [{"id": "x", "embedding": [1.0, "nan"]}, {"id": "y", "embedding": [1.0, 2.0]}]}),
        json!({"domain": [{"id": "x", "embedding": [1.0]}, {"id": "x", "embedding": [2.0]}]}),
        json!({"domain": arms(1)}),
        json!({"domain": arms(3), "config": {"exclude_first": false}}),
        json!({"domain": arms(3), "config": {"nu": -1.0}}),
        json!({"domain": arms(3), "surprise": true}),
    ] {
        let (status, resp) = call(&app, "POST", "/sessions", Some(body.clone())).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body} -> {resp}");
        assert!(resp["error"].is_string());
    }
    let (status, _) = call(&app, "POST", "/sessions", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn same_seed_same_first_pair() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (a_id, a) = create(&app, 10, 7).await;
    let (b_id, b) = create(&app, 10, 7).await;
    assert_ne!(a_id, b_id);
    assert_eq!(a["pair"], b["pair"]);
}

#[tokio::test]
async fn submit_grows_history_once() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (id, created) = create(&app, 8, 2).await;
    let (status, out) = prefer(&app, &id, "second").await;
    assert_eq!(status, StatusCode::OK, "{out}");
    assert_eq!(out["iteration"], 1);
    assert_eq!(out["pair"]["iteration"], 2);
    let (_, state) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    let history = state["history"].as_array().unwrap();
    assert_eq!(history.len(), 1);
    assert_eq!(history[0]["chosen"], "second");
    assert_eq!(history[0]["first_id"], created["pair"]["first"]["id"]);
    assert_eq!(state["pending"], out["pair"]);
}

#[tokio::test]
async fn repeated_submit_for_the_same_pair_is_409() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (id, _) = create(&app, 8, 3).await;
    let uri = format!("/sessions/{id}/preference");
    let body = json!({"chosen": "first", "iteration": 1});
    assert_eq!(
        call(&app, "POST", &uri, Some(body.clone())).await.0,
        StatusCode::OK
    );
    let (status, resp) = call(&app, "POST", &uri, Some(body)).await;
    assert_eq!(status, StatusCode::CONFLICT, "{resp}");
    let (_, state) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(state["history"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn retried_token_is_applied_once() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (id, _) = create(&app, 8, 4).await;
    let uri = format!("/sessions/{id}/preference");
    let body = json!({"chosen": "first", "token": "click-1"});
    let (s1, r1) = call(&app, "POST", &uri, Some(body.clone())).await;
    let (s2, r2) = call(&app, "POST", &uri, Some(body)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(r1, r2);
    let (_, state) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(state["iteration"], 1);
}

#[tokio::test]
async fn malformed_preference_is_422() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (id, _) = create(&app, 5, 0).await;
    let uri = format!("/sessions/{id}/preference");
    for body in [
        json!({"chosen": "left"}),
        json!({}),
        json!({"chosen": "first", "extra": 1}),
    ] {
        assert_eq!(
            call(&app, "POST", &uri, Some(body)).await.0,
            StatusCode::UNPROCESSABLE_ENTITY
        );
    }
    let (_, state) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(state["iteration"], 0);
}

#[tokio::test]
async fn best_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (id, created) = create(&app, 9, 5).await;
    let uri = format!("/sessions/{id}/best");
    assert_eq!(call(&app, "GET", &uri, None).await.0, StatusCode::CONFLICT);

    let (_, out) = prefer(&app, &id, "first").await;
    let (status, best) = call(&app, "GET", &uri, None).await;
    assert_eq!(status, StatusCode::OK);
    let shown = [
        &created["pair"]["first"]["id"],
        &created["pair"]["second"]["id"],
    ];
    assert!(shown.contains(&&best["id"]), "{best}");
    assert_eq!(best["iteration"], 1);
    assert_eq!(best, out["best"]);

    let (twin, _) = create(&app, 9, 5).await;
    prefer(&app, &twin, "first").await;
    let (_, twin_best) = call(&app, "GET", &format!("/sessions/{twin}/best"), None).await;
    assert_eq!(twin_best, best);
}

#[tokio::test]
async fn unknown_sessions_are_404() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let missing = "00000000-0000-4000-8000-000000000000";
    for uri in [
        format!("/sessions/{missing}"),
        format!("/sessions/{missing}/best"),
        "/sessions/not-a-uuid".to_owned(),
        "/sessions/..%2Fescape/best".to_owned(),
    ] {
        let (status, body) = call(&app, "GET", &uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert!(body["error"].is_string());
    }
    assert_eq!(
        prefer(&app, missing, "first").await.0,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn healthz() {
    let dir = tempfile::tempdir().unwrap();
    let (status, body) = call(&app(dir.path()), "GET", "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
}

#[tokio::test]
async fn contextual_sessions_cycle_contexts() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let rounds: Vec<_> = (0..2)
        .map(|k| {
            let candidates: Vec<_> = arms(4)
                .into_iter()
                .map(|mut a| {
                    a["id"] = json!(format!("c{k}-{}", a["id"].as_str().unwrap()));
                    a["embedding"].as_array_mut().unwrap().push(json!(k as f64));
                    a
                })
                .collect();
            json!({"context_id": format!("q{k}"), "context_text": format!("question {k}"), "candidates": candidates})
        })
        .collect();
    let (status, created) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"contextual": rounds, "config": fast_config(1)})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    assert_eq!(created["pair"]["context"]["id"], "q0");
    assert_eq!(created["pair"]["context"]["text"], "question 0");
    let id = created["session_id"].as_str().unwrap();
    let (_, out) = prefer(&app, id, "first").await;
    assert_eq!(out["pair"]["context"]["id"], "q1");
    assert!(out["pair"]["first"]["id"]
        .as_str()
        .unwrap()
        .starts_with("c1-"));
    assert_eq!(out["best"]["context_id"], "q0");
}

#[tokio::test]
async fn domain_refs_stay_inside_the_domains_directory() {
    let dir = tempfile::tempdir().unwrap();
    let domains = dir.path().join("domains");
    std::fs::create_dir_all(&domains).unwrap();
    let jsonl: String = arms(6).iter().map(|a| format!("{a}\n")).collect();
    std::fs::write(domains.join("six.jsonl"), jsonl).unwrap();
    std::fs::write(dir.path().join("outside.jsonl"), "").unwrap();
    let app = common::app_with(dir.path(), Some(&domains), None);

    let (status, body) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"domain_ref": "six.jsonl", "config": fast_config(0)})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    for bad in ["../outside.jsonl", "/etc/passwd", "", "missing.jsonl"] {
        let (status, _) = call(&app, "POST", "/sessions", Some(json!({"domain_ref": bad}))).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{bad}");
    }
}
